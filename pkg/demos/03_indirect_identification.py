"""Identify G31 of the benchmark network from one record.

Checks the predictor set, runs the two-stage LPM estimate and smooths it with
the variance-weighted rational fit.
"""
import numpy as np

from netlpm import (ExcitationSpec, LpmConfig, PredictorSet, check_predictor_set,
                    paper_network, run_indirect, simulate)
from netlpm.parfit import ModelOrders, TargetFrf, fit_target

net = paper_network()
for D in ((1, 2, 4), (1,)):
    rep = check_predictor_set(net, PredictorSet(3, 1, D))
    print(f"D = {D}:\n{rep.summary()}\n")

ps = PredictorSet(3, 1, (1, 2, 4))
orders = ModelOrders(nb=2, na=2, delay=1)
print("true theta:", orders.theta_of(net.modules[(3, 1)]))

for label, N, kw in (("noise-free multisine, N=4096", 4096,
                      dict(excitation=ExcitationSpec("multisine", 0.1), process_noise=False)),
                     ("white references with noise, N=500", 500,
                      dict(excitation=ExcitationSpec("white", 0.1)))):
    ds = simulate(net, kw.pop("excitation"), N, seed=0, **kw)
    res = run_indirect(ds, ps, [1, 2, 4], LpmConfig(2, 12))
    target = TargetFrf.from_indirect(res)
    est = fit_target(target, orders)
    sd = np.sqrt(np.diag(est.theta_cov))
    print(f"{label}: theta {np.round(est.theta, 4)} +- {np.round(sd, 4)}, "
          f"cost {est.cost:.3g}, {target.lines.size} lines")

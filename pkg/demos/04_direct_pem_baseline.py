"""Direct prediction-error baseline on the same record.

Fits the MISO Box-Jenkins model with true orders for every module into w3
and compares the G31 part with the truth.
"""
import numpy as np

from netlpm import ExcitationSpec, PredictorSet, paper_network, simulate
from netlpm.direct_pem import MisoStructure, pem_fit
from netlpm.parfit import ModelOrders

net = paper_network()
ps = PredictorSet(3, 1, (1, 2, 4))
st = MisoStructure.from_network(net, ps, ModelOrders(2, 2, 1))
print(f"{st.n_theta} parameters, noise orders {st.noise_orders}")

ds = simulate(net, ExcitationSpec("white", 0.1), 500, seed=0)
res = pem_fit(ds, st)
print("final cost per start:", np.round(res.restarts, 5))
for k in st.predictors:
    m = res.module(k)
    print(f"G3{k}: theta {np.round(m.theta, 4)}  true "
          f"{np.round(m.orders.theta_of(net.modules[(3, k)]), 4)}")
print("noise model C/D:", np.round(res.noise_model.num, 3), "/", np.round(res.noise_model.den, 3))

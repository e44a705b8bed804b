"""Small Monte Carlo comparison of the two methods.

The full study uses 100 replicates (``netlpm montecarlo --config
paper_sec5_mc.json``); pass a count on the command line to change it here.
"""
import sys

import numpy as np

from netlpm import PredictorSet, paper_network
from netlpm.bench import McConfig, run_monte_carlo

M = int(sys.argv[1]) if len(sys.argv) > 1 else 10
rep = run_monte_carlo(McConfig(replicates=M), paper_network(), PredictorSet(3, 1, (1, 2, 4)))
print(f"{M} replicates, N = {rep.config.N}")
for m in rep.config.methods:
    ps = rep.param_stats(m)
    fs = rep.frf_stats(m)
    ratio = np.abs(fs["mean_err"]) / fs["std_of_mean"]
    print(f"{m:10s} median fit {rep.median_fit(m):.3f}  failed {len(rep.errors[m])}")
    print(f"           bias {np.round(ps['bias'], 3)}  std {np.round(ps['std'], 3)}")
    print(f"           lines with |mean error| < 3 std-of-mean: {np.mean(ratio < 3):.2f}")

"""
Checking the backward pass against finite differences
=====================================================

Central differences with a step of 1e-3 are compared with the analytic
gradient of the training loss for every parameter of a small network.
Some probes push a ReLU input across zero; for those entries the plain
difference quotient is not a derivative at all, so a second quotient is
taken with every ReLU gate held at its unperturbed pattern.

    python demos/plot_gradient_check.py
"""
import numpy as np

from msrnet.gradcheck import check_model_gradients
from msrnet.model import MsrNet, MsrNetConfig

rng = np.random.default_rng(0)
net = MsrNet(MsrNetConfig(n=2, v=[10, 300], K=2, width=4), seed=0, dtype=np.float64)
x, y = rng.random((2, 1, 3, 8, 8))

report = check_model_gradients(net, x, y, lam=1e-6, step=1e-3)
print(f"{'param':6s} {'entries':>7s} {'kinks':>5s} {'plain':>10s} {'kink-aware':>10s}")
for name, r in report.items():
    print(f"{name:6s} {r['entries']:7d} {r['kink_entries']:5d} "
          f"{r['raw']:10.2e} {r['kink_aware']:10.2e}")

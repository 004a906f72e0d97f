"""
Which observation operators can see the unstable subspace?
==========================================================

Linear warm-up first, then the time-averaged diagonal of R~ along an L96
trajectory for a few observation ranks.
"""

import numpy as np

from lyapda import gramian, lti_detectable, ltv_detectability, min_gain, observability_matrix
from lyapda.models import l96_initial, lorenz96
from lyapda.qr import laplacian_observation

# A = diag(1, -1): observing the growing mode is enough, observing the decaying one is not
a = np.diag([1.0, -1.0])
for h in ([[1.0, 0.0]], [[0.0, 1.0]]):
    om = observability_matrix(a, h)
    res = lti_detectable(a, h)
    print(f"H = {h}: rank {om.rank}, detectable {res.detectable}, witness {res.eigenvalue}")

# the Gramian has the same kernel as the observability matrix
w = gramian(a, [[1.0, 0.0]], t_horizon=5.0)
print("Gramian:\n", w)

model, z0 = lorenz96(18), l96_initial(18)
for rank in (5, 6, 7, 8):
    rep = ltv_detectability(model, z0, laplacian_observation(18, rank), k=8,
                            t_horizon=300.0, dt=0.01)
    print(f"rank {rank}: k* = {rep.k_star}, verdict {rep.verdict}, "
          f"averages {np.round(rep.direction_averages[:rep.k_star], 4)}")
    if rep.verdict:
        p = min_gain(rep.le_values[:rep.k_star], rep.direction_averages[:rep.k_star], kappa=0.05)
        print(f"    gain scale certified for decay rate 0.05: p > {p:.2f}")

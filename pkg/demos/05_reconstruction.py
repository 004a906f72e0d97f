"""
Least-squares recovery of an initial state
==========================================

For a linear system the best initial state given an output record is
W^+ b. With a singular Gramian only the observable part comes back.
"""

import numpy as np

from lyapda import least_squares_initial_state
from lyapda.models import linear_model
from lyapda.ode import IntegratorConfig, integrate


def record(a, h, z0, t_end=5.0, dt=0.01):
    traj = integrate(linear_model(a).rhs, IntegratorConfig(dt, 0.0, t_end), z0, stride=1)
    return traj.states @ np.atleast_2d(h).T


z0 = np.array([0.3, -1.2, 0.8])
a = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -0.5]])

h_full = [[1.0, 0.0, 1.0]]
v, res = least_squares_initial_state(a, h_full, record(a, h_full, z0), 0.01)
print("full-rank W :", v, "residual", res)

# the third coordinate is invisible through H = e1, so it comes back as zero
h_part = [[1.0, 0.0, 0.0]]
v, res = least_squares_initial_state(a, h_part, record(a, h_part, z0), 0.01)
print("singular W  :", v, "residual", res)

"""Sequential data assimilation with observers built from the unstable tangent subspace.

The non-stable tangent basis of a chaotic ODE is tracked by the continuous QR
method; the observer gain ``p Q Qt^T H^T`` then damps exactly the directions
that would otherwise grow.
"""

__version__ = "0.1.0"

from .detect import (DetectabilityReport, gramian, least_squares_initial_state,
                     lti_detectable, ltv_detectability, min_gain, observability_matrix)
from .filters import (ExkfState, FilterConfig, FilterState, RunResult, error_tangent_les,
                      exkf_p0_scale, exkf_step, filter_step, gain, run_exkf, run_filter,
                      run_linear_observer)
from .lyapunov import (LeEstimate, TangentBundle, compute_les, count_nonnegative,
                       discrete_qr_les, evolve_tangent, regularity_check, tangent_rhs)
from .models import (ModelSpec, ObservationProcess, burgers, burgers_initial, l96_initial,
                     linear_model, lorenz96, observe)
from .ode import DivergenceError, IntegratorConfig, integrate, rk4_step
from .qr import laplacian_observation, skew_projector, thin_qr

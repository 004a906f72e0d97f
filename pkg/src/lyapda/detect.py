"""Detectability analysis for linear time-invariant and time-varying pairs (A, H)."""

from dataclasses import dataclass

import numpy as np

from .lyapunov import co_integrate, count_nonnegative, growth_rates, random_orthonormal
from .ode import rk4_step, step_grid
from .qr import thin_qr

__all__ = [
    "ObservabilityMatrix",
    "LtiDetectability",
    "DetectabilityReport",
    "observability_matrix",
    "lti_detectable",
    "gramian",
    "least_squares_initial_state",
    "ltv_detectability",
    "min_gain",
]

PINV_CUTOFF = 1e-10


@dataclass
class ObservabilityMatrix:
    o: np.ndarray
    s: int
    rank: int
    kernel_basis: np.ndarray


@dataclass
class LtiDetectability:
    detectable: bool
    eigenvalue: complex | None = None
    eigenvector: np.ndarray | None = None

    def __bool__(self):
        return self.detectable


def _rank_and_kernel(m, rank_tol):
    _, sv, vt = np.linalg.svd(m)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, np.eye(m.shape[1])
    rank = int(np.count_nonzero(sv > rank_tol * sv[0]))
    return rank, vt[rank:].T


def observability_matrix(a, h, rank_tol=1e-10):
    """Stack ``H, HA, ..., HA^s`` until the rank stops growing.

    ``s`` is the smallest index with ``rank(O^s) == rank(O^{s+1})``; the
    kernel basis is orthonormal and spans the unobservable subspace.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    d = a.shape[0]
    if a.shape != (d, d) or h.shape[1] != d:
        raise ValueError(f"incompatible shapes A {a.shape}, H {h.shape}")
    blocks = [h]
    rank, kernel = _rank_and_kernel(h, rank_tol)
    s = 0
    while s < d:
        nxt = blocks[-1] @ a
        new_rank, new_kernel = _rank_and_kernel(np.vstack(blocks + [nxt]), rank_tol)
        if new_rank == rank:
            break
        blocks.append(nxt)
        rank, kernel = new_rank, new_kernel
        s += 1
    return ObservabilityMatrix(np.vstack(blocks), s, rank, kernel)


def lti_detectable(a, h, tol=0.0, rank_tol=1e-10):
    """Whether every mode of ``A`` hidden from ``H`` decays.

    ``A`` restricted to the (invariant) unobservable subspace must have all
    eigenvalues with real part below ``-tol``. When it does not, the offending
    eigenvalue and a corresponding state-space eigenvector are returned.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    kern = observability_matrix(a, h, rank_tol).kernel_basis
    if kern.shape[1] == 0:
        return LtiDetectability(True)
    restricted = kern.T @ a @ kern
    w, v = np.linalg.eig(restricted)
    worst = int(np.argmax(w.real))
    if w[worst].real < -tol:
        return LtiDetectability(True)
    lam = w[worst]
    vec = kern @ v[:, worst]
    if abs(lam.imag) == 0.0:
        lam, vec = lam.real, vec.real
    return LtiDetectability(False, lam, vec)


def _fundamental(a, t_horizon, dt):
    """RK4 approximations of ``exp(A t)`` on the step grid (columns integrated
    as ``z' = A z`` from the unit vectors)."""
    a = np.asarray(a, dtype=float)

    def f(t, x):
        return a @ x

    phi = np.eye(a.shape[0])
    times = [0.0]
    mats = [phi]
    t = 0.0
    for hstep in step_grid(0.0, t_horizon, dt):
        phi = rk4_step(f, t, phi, hstep)
        t += hstep
        times.append(t)
        mats.append(phi)
    return np.array(times), np.array(mats)


def gramian(a, h, t_horizon, dt=0.01):
    """Observability Gramian ``int_0^T exp(A^T t) H^T H exp(A t) dt`` (trapezoid)."""
    if t_horizon <= 0:
        raise ValueError("t_horizon must be positive")
    h = np.atleast_2d(np.asarray(h, dtype=float))
    times, phis = _fundamental(a, t_horizon, dt)
    hphi = np.einsum("pd,nde->npe", h, phis)
    integrand = np.einsum("npd,npe->nde", hphi, hphi)
    w = np.trapezoid(integrand, times, axis=0)
    return 0.5 * (w + w.T)


def _psd_pinv(w, cutoff=PINV_CUTOFF):
    vals, vecs = np.linalg.eigh(w)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    keep = vals > cutoff * top if top > 0 else np.zeros_like(vals, dtype=bool)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def least_squares_initial_state(a, h, y, dt):
    """Minimum-norm least-squares initial state from an output record.

    ``y[i]`` is the observation at ``t = i * dt``. Returns ``(v, residual)``
    with ``v = W^+ b`` and ``residual = int |y - H exp(At) v|^2 dt``.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    t_horizon = (y.shape[0] - 1) * dt
    times, phis = _fundamental(a, t_horizon, dt)
    if len(times) != y.shape[0]:
        raise ValueError("y must be sampled on the integration grid")
    hphi = np.einsum("pd,nde->npe", h, phis)
    w = np.trapezoid(np.einsum("npd,npe->nde", hphi, hphi), times, axis=0)
    b = np.trapezoid(np.einsum("npd,np->nd", hphi, y), times, axis=0)
    v = _psd_pinv(0.5 * (w + w.T)) @ b
    resid = y - np.einsum("npd,d->np", hphi, v)
    return v, float(np.trapezoid(np.einsum("np,np->n", resid, resid), times))


@dataclass
class DetectabilityReport:
    k: int
    k_star: int
    direction_averages: np.ndarray
    per_direction: np.ndarray
    verdict: bool
    necessary_condition: bool
    le_values: np.ndarray
    h_rank: int
    t_horizon: float
    threshold: float

    def to_text(self):
        lines = [
            f"k = {self.k}",
            f"k_star = {self.k_star}",
            f"h_rank = {self.h_rank}",
            f"t_horizon = {self.t_horizon:.17g}",
            f"threshold = {self.threshold:.17g}",
            f"necessary_condition = {str(self.necessary_condition).lower()}",
            f"verdict = {str(self.verdict).lower()}",
        ]
        lines += [f"lambda_{i + 1} = {v:.17g}" for i, v in enumerate(self.le_values)]
        lines += [f"average_{i + 1} = {v:.17g}" for i, v in enumerate(self.direction_averages)]
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        from .io import write_csv

        rows = [(j + 1, avg, bool(flag), lam) for j, (avg, flag, lam) in
                enumerate(zip(self.direction_averages, self.per_direction, self.le_values))]
        write_csv(path, ["direction", "average", "detectable", "lambda"], rows)


def ltv_detectability(model, x0, h, k, t_horizon, dt, threshold=1e-6, q0_seed=0,
                      burn_in=100.0, le_tol=0.0):
    """Per-direction detectability of ``(Df(x(t)), H(t))`` along a trajectory.

    Along the tangent flow, ``H^T H Q = Qt Rt`` is factorised at every step and
    the diagonal of ``Rt`` is time averaged. Direction ``j`` counts as
    detectable when its average exceeds ``threshold``. The number of
    nonnegative exponents ``k_star`` comes from the same run; the pair is
    detectable when all of the first ``k_star`` directions are and
    ``min(rank H, k) >= k_star``.

    ``h`` is a fixed ``s x d`` matrix or a callable ``t -> H(t)``.
    """
    d = model.d
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    h_of_t = h if callable(h) else (lambda t, _h=np.atleast_2d(np.asarray(h, float)): _h)
    x = np.asarray(x0, dtype=float)
    q = random_orthonormal(d, k, q0_seed)
    if burn_in > 0:
        for _, x, q, _ in co_integrate(model, x, q, dt, burn_in):
            pass
        x, q = x.copy(), q.copy()

    def rdiag(t, q):
        hh = h_of_t(t)
        return np.diag(thin_qr(hh.T @ (hh @ q)).r)

    h_rank = np.linalg.matrix_rank(h_of_t(burn_in))
    le_int = np.zeros(k)
    r_int = np.zeros(k)
    g_prev = growth_rates(model.jacobian(burn_in, x), q)
    r_prev = rdiag(burn_in, q)
    t_prev = burn_in
    for t, x, q, a in co_integrate(model, x, q, dt, t_horizon, t0=burn_in):
        g = growth_rates(a, q)
        r = rdiag(t, q)
        half = 0.5 * (t - t_prev)
        le_int += half * (g_prev + g)
        r_int += half * (r_prev + r)
        g_prev, r_prev, t_prev = g, r, t
        if callable(h):
            h_rank = min(h_rank, np.linalg.matrix_rank(h_of_t(t)))

    le_values = le_int / t_horizon
    averages = r_int / t_horizon
    k_star = count_nonnegative(le_values, le_tol)
    per_direction = averages > threshold
    necessary = min(h_rank, k) >= k_star
    verdict = bool(necessary and per_direction[:k_star].all())
    return DetectabilityReport(k, k_star, averages, per_direction, verdict, bool(necessary),
                               le_values, int(h_rank), float(t_horizon), float(threshold))


def min_gain(le_values, direction_averages, kappa):
    """Smallest gain scale ``p`` that pushes every error exponent below ``-kappa``.

    ``p_min = (kappa + max lambda_j) / min avg_j``, clamped at zero.
    """
    avg = np.asarray(direction_averages, dtype=float)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if avg.size == 0 or np.any(avg <= 0):
        raise ValueError("every direction average must be positive for a finite gain")
    p = (kappa + float(np.max(le_values))) / float(np.min(avg))
    return max(p, 0.0)

"""The tangent-space observer, its linear special case, and an Extended
Kalman-Bucy baseline, with twin-experiment drivers.

Twin experiments integrate the truth in the same RK4 system as the estimate,
so every stage sees the observation ``H z(t_stage)``. Observation noise is
drawn once per step and held over it.
"""

from dataclasses import dataclass, field

import numpy as np

from .lyapunov import (LeEstimate, TangentCollapse, growth_rates, random_orthonormal,
                       tangent_rhs)
from .models import ObservationProcess, linear_model
from .ode import DivergenceError, rk4_step, step_grid
from .qr import thin_qr

__all__ = [
    "FilterFailure",
    "FilterConfig",
    "FilterState",
    "ExkfState",
    "RunResult",
    "gain",
    "filter_step",
    "run_filter",
    "run_linear_observer",
    "error_tangent_les",
    "exkf_p0_scale",
    "exkf_step",
    "run_exkf",
]

CONVERGED_TOL = 1e-7
MACHINE_TOL = 1e-14
PSD_TOL = 1e-5


class FilterFailure(FloatingPointError):
    """The ExKF covariance lost positive semidefiniteness."""


@dataclass(frozen=True)
class FilterConfig:
    p: float = 10.0
    k: int = 8
    dt: float = 0.01
    t_end: float = 200.0
    q0_seed: int = 0
    tol: float = CONVERGED_TOL
    stop_below: float | None = None
    record_every: int = 1

    def __post_init__(self):
        if not self.p >= 0:
            raise ValueError("p must be nonnegative")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass
class FilterState:
    x: np.ndarray
    q: np.ndarray
    t: float = 0.0


@dataclass
class ExkfState:
    m: np.ndarray
    p_cov: np.ndarray
    t: float = 0.0


@dataclass
class RunResult:
    times: np.ndarray
    error_norms: np.ndarray
    tol: float = CONVERGED_TOL
    final_state: np.ndarray | None = None
    truth: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def converged_at(self):
        """First recorded time with error below ``tol``, else None."""
        hit = np.flatnonzero(self.error_norms < self.tol)
        return float(self.times[hit[0]]) if hit.size else None

    @property
    def final_error(self):
        return float(self.error_norms[-1])

    def error_at(self, t):
        """Error at the last recorded time not after ``t``."""
        i = np.searchsorted(self.times, t + 1e-9, side="right") - 1
        return float(self.error_norms[max(i, 0)])

    def to_csv(self, path):
        from .io import write_csv

        write_csv(path, ["t", "err_norm"], zip(self.times, self.error_norms))


def gain(q, h, p):
    """Observer gain ``p Q Qt^T H^T`` with ``H^T H Q = Qt Rt`` (thin QR)."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    q = np.asarray(q, dtype=float)
    qt = thin_qr(h.T @ (h @ q)).q
    return p * (q @ (qt.T @ h.T))


def _innovation_term(q, h, hth, p, innov):
    # applies the gain to the innovation without forming the d x s matrix
    qt = thin_qr(hth @ q).q
    return p * (q @ (qt.T @ (h.T @ innov)))


def filter_step(model, h, y, state, p, dt):
    """One RK4 step of the coupled observer ``(x, Q)``.

    ``y`` is either a fixed observation vector held over the step or a
    callable ``t -> y(t)``. The gain is rebuilt from the stage value of ``Q``.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    hth = h.T @ h
    y_of_t = y if callable(y) else (lambda t: y)
    f, jac = model.rhs, model.jacobian

    def rhs(t, s):
        x, q = s[:, 0], s[:, 1:]
        out = np.empty_like(s)
        out[:, 0] = f(t, x) + _innovation_term(q, h, hth, p, y_of_t(t) - h @ x)
        out[:, 1:] = tangent_rhs(jac(t, x), q)
        return out

    s = np.column_stack([state.x, state.q])
    s = rk4_step(rhs, state.t, s, dt)
    res = thin_qr(s[:, 1:])
    if res.rank < s.shape[1] - 1:
        raise TangentCollapse(f"tangent basis lost rank at t={state.t + dt:.6g}")
    return FilterState(s[:, 0].copy(), res.q, state.t + dt)


def _check_h(h, d):
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if h.shape[1] != d:
        raise ValueError(f"H has {h.shape[1]} columns, model dimension is {d}")
    return h


def run_filter(model, obs, truth_z0, x0, cfg):
    """Twin experiment for the tangent-space observer.

    Integrates the truth from ``truth_z0`` and the observer from ``x0`` with a
    seeded random orthonormal ``Q(0)``, recording ``|x - z|`` every
    ``cfg.record_every`` steps. Integration stops early once the error drops
    below ``cfg.stop_below`` (if set).
    """
    d = model.d
    if not 1 <= cfg.k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={cfg.k}, d={d}")
    h = _check_h(obs.h, d)
    hth = h.T @ h
    f, jac, p = model.rhs, model.jacobian, cfg.p
    noise = np.zeros(h.shape[0])

    def rhs(t, s):
        z, x, q = s[:, 0], s[:, 1], s[:, 2:]
        out = np.empty_like(s)
        out[:, 0] = f(t, z)
        innov = h @ z + noise - h @ x
        out[:, 1] = f(t, x) + _innovation_term(q, h, hth, p, innov)
        out[:, 2:] = tangent_rhs(jac(t, x), q)
        return out

    s = np.empty((d, cfg.k + 2))
    s[:, 0] = truth_z0
    s[:, 1] = x0
    s[:, 2:] = random_orthonormal(d, cfg.k, cfg.q0_seed)
    times = [0.0]
    errs = [np.linalg.norm(s[:, 1] - s[:, 0])]
    t = 0.0
    steps = step_grid(0.0, cfg.t_end, cfg.dt)
    for n, hstep in enumerate(steps, start=1):
        noise = obs.noise(n - 1)
        s = rk4_step(rhs, t, s, hstep)
        t = n * cfg.dt if hstep == cfg.dt else cfg.t_end
        res = thin_qr(s[:, 2:])
        if res.rank < cfg.k:
            raise TangentCollapse(f"tangent basis lost rank at t={t:.6g}")
        s[:, 2:] = res.q
        err = np.linalg.norm(s[:, 1] - s[:, 0])
        last = n == len(steps) or (cfg.stop_below is not None and err < cfg.stop_below)
        if n % cfg.record_every == 0 or last:
            times.append(t)
            errs.append(err)
        if last:
            break
    return RunResult(np.array(times), np.array(errs), cfg.tol, s[:, 1].copy(), s[:, 0].copy(),
                     {"q": s[:, 2:].copy()})


def run_linear_observer(a, h, z0, x0, cfg, sigma=0.0, seed=0):
    """Twin experiment for ``x' = A(t) x + L (y - H x)``.

    ``a`` is a constant matrix or a callable ``t -> A(t)``; the Jacobian of
    the linear model is ``A(t)`` itself.
    """
    return run_filter(linear_model(a), ObservationProcess(h, sigma, seed), z0, x0, cfg)


def error_tangent_les(model, h, p, k, k_eval, z0, t_avg, dt, x0=None, obs=None,
                      q0_seed=0, w0_seed=None, burn_in=100.0):
    """Leading exponents of the error dynamics ``W' = (A - L H) W``.

    The observer ``(x, Q)`` is integrated against the truth from ``z0``
    (``x0`` defaults to ``z0``), with ``A = Df(x)`` and the gain built from
    ``Q``. After ``burn_in`` time units the diagonal growth rates of the
    ``k_eval``-dimensional error basis are averaged over ``t_avg``.
    """
    d = model.d
    obs = obs if obs is not None else ObservationProcess(h)
    h = _check_h(obs.h, d)
    hth = h.T @ h
    f, jac = model.rhs, model.jacobian
    w0_seed = q0_seed + 1 if w0_seed is None else w0_seed
    noise = np.zeros(h.shape[0])
    iq = slice(2, 2 + k)
    iw = slice(2 + k, 2 + k + k_eval)

    def error_matrix(x, q):
        return jac(0.0, x) - gain(q, h, p) @ h

    def rhs(t, s):
        z, x, q, w = s[:, 0], s[:, 1], s[:, iq], s[:, iw]
        a = jac(t, x)
        lmat = gain(q, h, p)
        out = np.empty_like(s)
        out[:, 0] = f(t, z)
        out[:, 1] = f(t, x) + lmat @ (h @ z + noise - h @ x)
        out[:, iq] = tangent_rhs(a, q)
        out[:, iw] = tangent_rhs(a - lmat @ h, w)
        return out

    s = np.empty((d, 2 + k + k_eval))
    s[:, 0] = z0
    s[:, 1] = z0 if x0 is None else x0
    s[:, iq] = random_orthonormal(d, k, q0_seed)
    s[:, iw] = random_orthonormal(d, k_eval, w0_seed)

    integrals = np.zeros(k_eval)
    g_prev = None
    hist_t, hist = [], []
    t = 0.0
    n_burn = len(step_grid(0.0, burn_in, dt)) if burn_in > 0 else 0
    steps = (step_grid(0.0, burn_in, dt) if burn_in > 0 else []) + step_grid(0.0, t_avg, dt)
    for n, hstep in enumerate(steps, start=1):
        if n == n_burn + 1:
            g_prev = growth_rates(error_matrix(s[:, 1], s[:, iq]), s[:, iw])
        noise = obs.noise(n - 1)
        s = rk4_step(rhs, t, s, hstep)
        t += hstep
        for sl, width in ((iq, k), (iw, k_eval)):
            res = thin_qr(s[:, sl])
            if res.rank < width:
                raise TangentCollapse(f"tangent basis lost rank at t={t:.6g}")
            s[:, sl] = res.q
        if n > n_burn:
            g = growth_rates(error_matrix(s[:, 1], s[:, iq]), s[:, iw])
            integrals += 0.5 * hstep * (g_prev + g)
            g_prev = g
            if (n - n_burn) % 100 == 0:
                hist_t.append(t - burn_in)
                hist.append(integrals / (t - burn_in))
    return LeEstimate(integrals / t_avg, t_avg, np.array(hist_t),
                      np.array(hist).reshape(len(hist_t), k_eval))


# ------------------------------------------------------------------ ExKF

def exkf_p0_scale(d, sigma0):
    """Initial covariance scale ``1 / (4 d sigma0^2)`` (about 139 for d=18, sigma0=0.01)."""
    return 1.0 / (4.0 * d * sigma0 ** 2)


def _check_psd(p_cov, t, psd_tol):
    """Return ``min eig / |P|_2``; raise when it falls below ``-psd_tol``."""
    vals = np.linalg.eigvalsh(p_cov)
    top = max(abs(vals[0]), abs(vals[-1]))
    ratio = vals[0] / top if top > 0 else 0.0
    if ratio < -psd_tol:
        raise FilterFailure(f"ExKF covariance lost positive semidefiniteness at t={t:.6g} "
                            f"(min eigenvalue {vals[0]:.3g}, |P| = {top:.3g})")
    return ratio


def exkf_step(model, h, c, y, state, dt, psd_tol=PSD_TOL):
    """One RK4 step of ``m' = f(m) + P H^T C (y - H m)`` and the Riccati equation
    ``P' = A P + P A^T - P H^T C H P`` with ``A = Df(m)``; ``P`` is symmetrised
    afterwards."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    d = state.m.shape[0]
    htc = h.T @ c
    htch = htc @ h
    y_of_t = y if callable(y) else (lambda t: y)
    f, jac = model.rhs, model.jacobian

    def rhs(t, s):
        m, pc = s[:, 0], s[:, 1:]
        a = jac(t, m)
        out = np.empty_like(s)
        out[:, 0] = f(t, m) + pc @ (htc @ (y_of_t(t) - h @ m))
        ap = a @ pc
        out[:, 1:] = ap + ap.T - pc @ htch @ pc
        return out

    s = np.empty((d, d + 1))
    s[:, 0] = state.m
    s[:, 1:] = state.p_cov
    s = rk4_step(rhs, state.t, s, dt)
    p_cov = 0.5 * (s[:, 1:] + s[:, 1:].T)
    _check_psd(p_cov, state.t + dt, psd_tol)
    return ExkfState(s[:, 0].copy(), p_cov, state.t + dt)


def run_exkf(model, obs, truth_z0, x0, p0_scale, c=None, dt=0.001, t_end=100.0,
             tol=CONVERGED_TOL, record_every=1, psd_check_every=1, psd_tol=PSD_TOL):
    """Twin experiment for the Extended Kalman-Bucy filter with ``P(0) = p0_scale I``.

    Without model noise ``P`` collapses in the stable directions and explicit
    RK4 leaves eigenvalues slightly below zero there; a run fails only when
    ``min eig(P) < -psd_tol * |P|_2``. The worst ratio seen is reported in
    ``extra["min_eig_ratio"]``.
    """
    d = model.d
    h = _check_h(obs.h, d)
    c = np.eye(h.shape[0]) if c is None else np.atleast_2d(np.asarray(c, dtype=float))
    htc = h.T @ c
    htch = htc @ h
    f, jac = model.rhs, model.jacobian
    noise = np.zeros(h.shape[0])

    def rhs(t, s):
        z, m, pc = s[:, 0], s[:, 1], s[:, 2:]
        a = jac(t, m)
        out = np.empty_like(s)
        out[:, 0] = f(t, z)
        out[:, 1] = f(t, m) + pc @ (htc @ (h @ z + noise - h @ m))
        ap = a @ pc
        out[:, 2:] = ap + ap.T - pc @ htch @ pc
        return out

    s = np.empty((d, d + 2))
    s[:, 0] = truth_z0
    s[:, 1] = x0
    s[:, 2:] = p0_scale * np.eye(d)
    times = [0.0]
    errs = [np.linalg.norm(s[:, 1] - s[:, 0])]
    asym = 0.0
    worst = 1.0
    t = 0.0
    steps = step_grid(0.0, t_end, dt)
    for n, hstep in enumerate(steps, start=1):
        noise = obs.noise(n - 1)
        s = rk4_step(rhs, t, s, hstep)
        t = n * dt if hstep == dt else t_end
        pc = s[:, 2:]
        s[:, 2:] = 0.5 * (pc + pc.T)
        if n % psd_check_every == 0 or n == len(steps):
            worst = min(worst, _check_psd(s[:, 2:], t, psd_tol))
        if n % record_every == 0 or n == len(steps):
            times.append(t)
            errs.append(np.linalg.norm(s[:, 1] - s[:, 0]))
            asym = max(asym, float(np.abs(s[:, 2:] - s[:, 2:].T).max()))
    return RunResult(np.array(times), np.array(errs), tol, s[:, 1].copy(), s[:, 0].copy(),
                     {"p_cov": s[:, 2:].copy(), "max_asymmetry": asym,
                      "min_eig_ratio": worst})

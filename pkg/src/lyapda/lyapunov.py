"""Lyapunov exponents and the leading tangent basis by the continuous QR method.

The orthonormal basis ``Q`` of the leading ``k``-dimensional tangent subspace
is advanced by ``Q' = (I - QQ^T) A Q + Q S`` where ``S`` is the skew part that
keeps ``Q^T A Q - S`` upper triangular. The exponents are time averages of
``diag(Q^T A Q)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .ode import DivergenceError, rk4_step, step_grid
from .qr import skew_projector, thin_qr

__all__ = [
    "TangentCollapse",
    "TangentBundle",
    "LeEstimate",
    "RegularityDiagnostic",
    "random_orthonormal",
    "tangent_rhs",
    "growth_rates",
    "evolve_tangent",
    "co_integrate",
    "compute_les",
    "discrete_qr_les",
    "regularity_check",
    "count_nonnegative",
]


class TangentCollapse(FloatingPointError):
    """Re-orthonormalisation produced a zero column: the tangent basis lost rank."""


@dataclass
class TangentBundle:
    q: np.ndarray
    le_integrals: np.ndarray
    t: float = 0.0

    @classmethod
    def start(cls, q, t=0.0):
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros(q.shape[1]), t)


@dataclass
class LeEstimate:
    values: np.ndarray
    t_avg: float
    history_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    history: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __len__(self):
        return len(self.values)

    def to_csv(self, path):
        from .io import write_csv

        k = len(self.values)
        header = ["t"] + [f"lambda_{i + 1}" for i in range(k)]
        rows = np.column_stack([self.history_t, self.history]) if len(self.history_t) else \
            np.column_stack([[self.t_avg], [self.values]])
        write_csv(path, header, rows)


@dataclass
class RegularityDiagnostic:
    sup_estimate: np.ndarray
    inf_estimate: np.ndarray

    @property
    def gap(self):
        return self.sup_estimate - self.inf_estimate


def random_orthonormal(d, k, seed=0):
    """Orthonormal ``d x k`` basis from the Q factor of a seeded Gaussian matrix."""
    g = np.random.default_rng(seed).standard_normal((d, k))
    res = thin_qr(g)
    if res.rank < k:  # pragma: no cover - probability zero
        raise TangentCollapse("random initial basis is rank deficient")
    return res.q


def tangent_rhs(a, q):
    """Right-hand side ``(I - q q^T) a q + q S`` of the thin QR flow."""
    a = np.asarray(a)
    q = np.asarray(q)
    if a.shape[0] != a.shape[1] or a.shape[1] != q.shape[0]:
        raise ValueError(f"shape mismatch: A {a.shape}, Q {q.shape}")
    aq = a @ q
    m = q.T @ aq
    return aq - q @ (m - skew_projector(m))


def growth_rates(a, q):
    """Instantaneous growth rates ``diag(q^T a q)``."""
    return np.einsum("ij,ij->j", q, a @ q)


def _reorthonormalize(q, t):
    res = thin_qr(q)
    if res.rank < q.shape[1]:
        raise TangentCollapse(f"tangent basis lost rank at t={t:.6g}")
    return res.q


def evolve_tangent(a_of_t, bundle, dt):
    """Advance a :class:`TangentBundle` by one RK4 step of the linear flow ``A(t)``.

    ``le_integrals`` gains the trapezoidal integral of ``diag(Q^T A Q)`` over
    the step; ``Q`` is re-orthonormalised afterwards.
    """
    t = bundle.t

    def f(s, q):
        return tangent_rhs(a_of_t(s), q)

    g0 = growth_rates(a_of_t(t), bundle.q)
    q = _reorthonormalize(rk4_step(f, t, bundle.q, dt), t + dt)
    g1 = growth_rates(a_of_t(t + dt), q)
    return TangentBundle(q, bundle.le_integrals + 0.5 * dt * (g0 + g1), t + dt)


def co_integrate(model, x0, q0, dt, t_total, t0=0.0):
    """Step the base trajectory and the tangent basis together.

    Yields ``(t, x, q, a)`` after every step where ``a`` is the Jacobian at
    the new base point. The Jacobian at each RK stage is evaluated at the
    stage value of ``x``.
    """
    x0 = np.asarray(x0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    d, k = q0.shape
    f, jac = model.rhs, model.jacobian

    def rhs(t, s):
        x = s[:, 0]
        out = np.empty_like(s)
        out[:, 0] = f(t, x)
        out[:, 1:] = tangent_rhs(jac(t, x), s[:, 1:])
        return out

    s = np.empty((d, k + 1))
    s[:, 0] = x0
    s[:, 1:] = q0
    t = t0
    for n, h in enumerate(step_grid(t0, t0 + t_total, dt), start=1):
        s = rk4_step(rhs, t, s, h)
        t = t0 + n * dt if h == dt else t0 + t_total
        s[:, 1:] = _reorthonormalize(s[:, 1:], t)
        x = s[:, 0]
        yield t, x, s[:, 1:], jac(t, x)


def compute_les(model, x0, k, t_avg, dt, q0_seed=0, burn_in=100.0, record_every=100,
                order_slack=1e-3):
    """Estimate the ``k`` leading Lyapunov exponents along a model trajectory.

    The base trajectory and the tangent basis are spun up together for
    ``burn_in`` time units, after which ``diag(Q^T A Q)`` is averaged over
    ``t_avg`` time units. Running averages are kept every ``record_every``
    steps in ``history``.

    Raises
    ------
    DivergenceError
        The base trajectory blew up.
    TangentCollapse
        The tangent basis lost rank.
    ValueError
        The estimates are not ordered within ``order_slack`` (``None``
        skips the check).
    """
    if not 1 <= k <= model.d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={model.d}")
    if t_avg <= 0:
        raise ValueError("t_avg must be positive")
    x = np.asarray(x0, dtype=float)
    q = random_orthonormal(model.d, k, q0_seed)
    if burn_in > 0:
        for _, x, q, _ in co_integrate(model, x, q, dt, burn_in):
            pass
        x, q = x.copy(), q.copy()

    g_prev = growth_rates(model.jacobian(burn_in, x), q)
    integrals = np.zeros(k)
    t_prev = burn_in
    hist_t, hist = [], []
    for n, (t, x, q, a) in enumerate(co_integrate(model, x, q, dt, t_avg, t0=burn_in), 1):
        g = growth_rates(a, q)
        integrals += 0.5 * (t - t_prev) * (g_prev + g)
        g_prev, t_prev = g, t
        if record_every and n % record_every == 0:
            hist_t.append(t - burn_in)
            hist.append(integrals / (t - burn_in))

    values = integrals / t_avg
    if order_slack is not None and np.any(np.diff(values) > order_slack):
        raise ValueError(f"Lyapunov estimates are not ordered: {values}")
    if record_every and (not hist_t or hist_t[-1] != t_avg):
        hist_t.append(t_avg)
        hist.append(values)
    return LeEstimate(values, t_avg, np.array(hist_t), np.array(hist).reshape(len(hist_t), k))


def discrete_qr_les(model, x0, k, t_avg, dt, q0_seed=0, burn_in=100.0, reorth_every=10):
    """Benettin-style estimate: propagate the tangent matrix with the linearised
    flow, factorise every ``reorth_every`` steps and average ``log r_ii``.

    Independent of the continuous flow; used as a cross-check.
    """
    d = model.d
    f, jac = model.rhs, model.jacobian
    x = np.asarray(x0, dtype=float)
    if burn_in > 0:
        for h in step_grid(0.0, burn_in, dt):
            x = rk4_step(f, 0.0, x, h)

    def rhs(t, s):
        out = np.empty_like(s)
        out[:, 0] = f(t, s[:, 0])
        out[:, 1:] = jac(t, s[:, 0]) @ s[:, 1:]
        return out

    s = np.empty((d, k + 1))
    s[:, 0] = x
    s[:, 1:] = random_orthonormal(d, k, q0_seed)
    logs = np.zeros(k)
    t = burn_in
    steps = step_grid(0.0, t_avg, dt)
    for n, h in enumerate(steps, start=1):
        s = rk4_step(rhs, t, s, h)
        t += h
        if n % reorth_every == 0 or n == len(steps):
            res = thin_qr(s[:, 1:])
            if res.rank < k:
                raise TangentCollapse(f"tangent basis lost rank at t={t:.6g}")
            logs += np.log(np.diag(res.r))
            s[:, 1:] = res.q
    return LeEstimate(logs / t_avg, t_avg)


def regularity_check(history):
    """Spread of the running averages over the trailing half of ``history``.

    ``history`` is an ``(n_samples, k)`` array of running averages (or a 1-D
    array for a single exponent). A large gap means the limit defining the
    exponent has not settled.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] < 4:
        raise ValueError("regularity_check needs at least 4 history samples")
    tail = h[h.shape[0] // 2:]
    return RegularityDiagnostic(tail.max(axis=0), tail.min(axis=0))


def count_nonnegative(le, tol=0.0):
    """Number of exponents ``>= -tol``."""
    values = le.values if isinstance(le, LeEstimate) else np.asarray(le, dtype=float)
    return int(np.count_nonzero(values >= -tol))

"""Fixed-step classical Runge-Kutta integration for vector and matrix states."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DivergenceError",
    "IntegratorConfig",
    "Trajectory",
    "rk4_step",
    "integrate",
    "step_grid",
]


class DivergenceError(FloatingPointError):
    """A derivative or state became non-finite during integration."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t0: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        if (self.t_end - self.t0) / self.dt > 1e12:
            raise ValueError("too many steps for the requested interval")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)


def step_grid(t0, t_end, dt):
    """Step sizes covering ``[t0, t_end]`` with a shortened final step if needed."""
    n = int(np.floor((t_end - t0) / dt + 1e-9))
    steps = [dt] * n
    rem = (t_end - t0) - n * dt
    if rem > 1e-12 * max(1.0, abs(t_end)):
        steps.append(rem)
    return steps


def _check(k, t):
    if not np.isfinite(k).all():
        raise DivergenceError("non-finite derivative", t)
    return k


def rk4_step(f, t, state, dt):
    """One classical four-stage Runge-Kutta step of ``state' = f(t, state)``."""
    k1 = _check(f(t, state), t)
    h = 0.5 * dt
    k2 = _check(f(t + h, state + h * k1), t + h)
    k3 = _check(f(t + h, state + h * k2), t + h)
    k4 = _check(f(t + dt, state + dt * k3), t + dt)
    with np.errstate(over="ignore", invalid="ignore"):
        out = state + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.isfinite(out).all():
        raise DivergenceError("non-finite state", t + dt)
    return out


def integrate(f, cfg, x0, on_step=None, stride=None):
    """Integrate from ``cfg.t0`` to ``cfg.t_end`` with repeated :func:`rk4_step`.

    ``on_step(t, state)`` runs after every step; a non-None return value
    replaces the state. Snapshots are kept every ``stride`` steps (default:
    every step for runs of at most 1000 steps, else every 10th) plus the
    final state.
    """
    steps = step_grid(cfg.t0, cfg.t_end, cfg.dt)
    if stride is None:
        stride = 1 if len(steps) <= 1000 else 10
    state = np.array(x0, dtype=float)
    t = cfg.t0
    times = [t]
    states = [state.copy()]
    for n, h in enumerate(steps, start=1):
        state = rk4_step(f, t, state, h)
        # index-based time avoids accumulating rounding in t
        t = cfg.t0 + cfg.dt * n if h == cfg.dt else cfg.t_end
        if on_step is not None:
            new = on_step(t, state)
            if new is not None:
                state = np.asarray(new, dtype=float)
        if n % stride == 0 or n == len(steps):
            times.append(t)
            states.append(state.copy())
    return Trajectory(np.array(times), np.array(states))

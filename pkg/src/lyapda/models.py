"""Test systems with analytic Jacobians, and the observation process."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ModelSpec",
    "ObservationProcess",
    "l96_rhs",
    "l96_jacobian",
    "l96_initial",
    "lorenz96",
    "burgers_rhs",
    "burgers_jacobian",
    "burgers_initial",
    "burgers",
    "linear_model",
    "observe",
]


@dataclass(frozen=True)
class ModelSpec:
    """An ODE ``z' = rhs(t, z)`` together with its Jacobian ``jacobian(t, z)``."""

    d: int
    rhs: Callable
    jacobian: Callable
    name: str = "model"
    linear: bool = False


# ---------------------------------------------------------------- Lorenz '96

def l96_rhs(z, forcing=8.0):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] < 4:
        raise ValueError("Lorenz '96 needs d >= 4")
    zp1 = np.roll(z, -1, axis=-1)
    zm1 = np.roll(z, 1, axis=-1)
    zm2 = np.roll(z, 2, axis=-1)
    return (zp1 - zm2) * zm1 - z + forcing


def _l96_index(d):
    i = np.arange(d)
    return i, (i + 1) % d, (i - 1) % d, (i - 2) % d


def l96_jacobian(z, forcing=8.0):
    """Analytic Jacobian of :func:`l96_rhs` (independent of the forcing)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[0]
    if d < 4:
        raise ValueError("Lorenz '96 needs d >= 4")
    i, ip1, im1, im2 = _l96_index(d)
    jac = np.zeros((d, d))
    jac[i, i] = -1.0
    jac[i, im1] = z[ip1] - z[im2]
    jac[i, ip1] = z[im1]
    jac[i, im2] = -z[im1]
    return jac


def l96_initial(d):
    """``z_i(0) = sin(2 pi (i - 1) / d)`` for ``i = 1..d``."""
    return np.sin(2.0 * np.pi * np.arange(d) / d)


def lorenz96(d=18, forcing=8.0):
    if d < 4:
        raise ValueError("Lorenz '96 needs d >= 4")
    # index arrays precomputed once; the Jacobian is rebuilt at every RK stage
    i, ip1, im1, im2 = _l96_index(d)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([im1, ip1, im2])
    diag = -np.eye(d)

    def rhs(t, z):
        return (z[ip1] - z[im2]) * z[im1] - z + forcing

    def jacobian(t, z):
        jac = diag.copy()
        jac[rows, cols] = np.concatenate([z[ip1] - z[im2], z[im1], -z[im1]])
        return jac

    return ModelSpec(d, rhs, jacobian, name=f"l96(d={d},F={forcing:g})")


# ------------------------------------------------------------------ Burgers

def _burgers_coef(d):
    if d < 3:
        raise ValueError("the Burgers lattice needs d >= 3")
    return 1.0 / (6.0 * (2.0 * np.pi / d))


def burgers_rhs(u):
    """Energy-conserving finite-difference Burgers on a periodic lattice."""
    u = np.asarray(u, dtype=float)
    c = _burgers_coef(u.shape[-1])
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    return -c * (u * (up - um) + (up * up - um * um))


def burgers_jacobian(u):
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    c = _burgers_coef(d)
    i = np.arange(d)
    ip1, im1 = (i + 1) % d, (i - 1) % d
    jac = np.zeros((d, d))
    jac[i, i] = -c * (u[ip1] - u[im1])
    jac[i, ip1] += -c * (u + 2.0 * u[ip1])
    jac[i, im1] += c * (u + 2.0 * u[im1])
    return jac


def burgers_initial(d, seed=0):
    """Uniform ``U(0, 1)`` initial state from a seeded generator."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=d)


def burgers(d=18):
    c = _burgers_coef(d)
    i = np.arange(d)
    ip1, im1 = (i + 1) % d, (i - 1) % d
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, ip1, im1])

    def rhs(t, u):
        up = u[ip1]
        um = u[im1]
        return -c * (u * (up - um) + (up * up - um * um))

    def jacobian(t, u):
        jac = np.zeros((d, d))
        up = u[ip1]
        um = u[im1]
        vals = np.concatenate([-c * (up - um), -c * (u + 2.0 * up), c * (u + 2.0 * um)])
        if d == 3:
            # stencil columns collide on the smallest lattice
            np.add.at(jac, (rows, cols), vals)
        else:
            jac[rows, cols] = vals
        return jac

    return ModelSpec(d, rhs, jacobian, name=f"burgers(d={d})")


# ------------------------------------------------------------------- linear

def linear_model(a):
    """``z' = A(t) z`` for a constant matrix or a callable ``t -> A(t)``."""
    if callable(a):
        a_of_t = a
        d = np.asarray(a(0.0)).shape[0]
    else:
        a_const = np.array(a, dtype=float)
        if a_const.ndim != 2 or a_const.shape[0] != a_const.shape[1]:
            raise ValueError("A must be square")
        d = a_const.shape[0]

        def a_of_t(t):
            return a_const

    def rhs(t, z):
        return a_of_t(t) @ z

    def jacobian(t, z):
        return np.asarray(a_of_t(t), dtype=float)

    return ModelSpec(d, rhs, jacobian, name=f"linear(d={d})", linear=True)


# -------------------------------------------------------------- observation

@dataclass(frozen=True)
class ObservationProcess:
    """``y = H z + sigma * eta`` with a noise stream keyed by ``(seed, t_index)``."""

    h: np.ndarray
    sigma: float = 0.0
    seed: int = 0
    _h: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = np.atleast_2d(np.array(self.h, dtype=float))
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "_h", h)
        object.__setattr__(self, "h", h)

    def noise(self, t_index):
        if self.sigma == 0.0:
            return np.zeros(self.h.shape[0])
        rng = np.random.default_rng([self.seed, int(t_index)])
        return self.sigma * rng.standard_normal(self.h.shape[0])


def observe(proc, z, t_index):
    y = proc.h @ np.asarray(z, dtype=float)
    if proc.sigma == 0.0:
        return y
    return y + proc.noise(t_index)

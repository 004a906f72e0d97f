"""Dense kernels: thin QR by modified Gram-Schmidt, the skew projector of the
QR flow, and the Laplacian-eigenvector observation operator."""

from dataclasses import dataclass

import numpy as np

__all__ = ["ThinQrResult", "thin_qr", "skew_projector", "laplacian_observation"]

DEFAULT_RANK_TOL = 1e-12
_REORTH_TOL = 1e-8


@dataclass(frozen=True)
class ThinQrResult:
    q: np.ndarray
    r: np.ndarray
    rank: int

    def __iter__(self):
        # allows ``q, r, rank = thin_qr(y)``
        return iter((self.q, self.r, self.rank))


def _mgs(y, rank_tol):
    # work on the transpose so each column is a contiguous row
    qt = np.array(y, dtype=float).T.copy()
    k = qt.shape[0]
    r = np.zeros((k, k))
    norms0 = np.sqrt(np.einsum("ij,ij->i", qt, qt))
    for j in range(k):
        v = qt[j]
        nrm = np.sqrt(v.dot(v))
        if nrm == 0.0 or nrm <= rank_tol * norms0[j]:
            v[:] = 0.0
            continue
        r[j, j] = nrm
        v *= 1.0 / nrm
        if j + 1 < k:
            # right-looking MGS: remove direction j from all later columns at once
            rest = qt[j + 1:]
            rj = rest.dot(v)
            r[j, j + 1:] = rj
            rest -= rj[:, None] * v
    return qt.T, r


def thin_qr(y, rank_tol=DEFAULT_RANK_TOL):
    """Thin QR factorisation ``y = q @ r`` by modified Gram-Schmidt.

    ``r`` has a nonnegative diagonal. A column whose residual after projecting
    out the previous directions falls to ``rank_tol`` times its original norm
    or below is treated as dependent: its ``q`` column is zero and ``r_jj = 0``.
    A second MGS pass is run when the first leaves ``q`` visibly
    non-orthonormal.

    Parameters
    ----------
    y : (d, k) array_like with k <= d
    rank_tol : float, optional
        Relative dependence threshold.

    Returns
    -------
    ThinQrResult
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError(f"thin_qr expects a 2-D array, got shape {y.shape}")
    d, k = y.shape
    if k > d:
        raise ValueError(f"thin_qr needs k <= d, got {d}x{k}")
    if rank_tol < 0:
        raise ValueError("rank_tol must be nonnegative")
    if not np.isfinite(y).all():
        raise ValueError("thin_qr input contains non-finite entries")

    q, r = _mgs(y, rank_tol)
    rdiag = r.diagonal()
    mask = rdiag > 0.0
    gram = q.T @ q
    gram.flat[:: k + 1] -= mask
    if k and np.abs(gram).max() > _REORTH_TOL:
        q2, r2 = _mgs(q, rank_tol)
        # second pass must keep the zero pattern of the first
        keep = (r2.diagonal() > 0.0) & mask
        q2[:, ~keep] = 0.0
        r2[~keep, :] = 0.0
        r = r2 @ r
        q = q2
        mask = keep
    return ThinQrResult(q, r, int(mask.sum()))


def skew_projector(m):
    """Skew-symmetric matrix carrying the strict lower triangle of ``m``.

    ``S[i, j] = m[i, j]`` for ``i > j`` and ``S = -S.T``, so ``m - S`` is upper
    triangular.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"skew_projector expects a square matrix, got {m.shape}")
    low = np.tril(m, -1)
    return low - low.T


def laplacian_observation(d, k):
    """First ``k`` orthonormal eigenvectors of the periodic discrete Laplacian.

    Rows are ordered by descending eigenvalue ``-4 sin^2(pi j / d)``: the
    constant mode first, then cosine/sine pairs of increasing wavenumber
    (cosine before sine).
    """
    d = int(d)
    k = int(k)
    if not 1 <= k <= d:
        raise ValueError(f"laplacian_observation needs 1 <= k <= d, got k={k}, d={d}")
    idx = np.arange(d)
    rows = [np.full(d, 1.0 / np.sqrt(d))]
    j = 1
    while len(rows) < k:
        phase = 2.0 * np.pi * j * idx / d
        if 2 * j == d:
            rows.append(np.cos(phase) / np.sqrt(d))
        else:
            rows.append(np.sqrt(2.0 / d) * np.cos(phase))
            rows.append(np.sqrt(2.0 / d) * np.sin(phase))
        j += 1
    return np.array(rows[:k])

"""Small dense complex linear algebra used by the learners.

LAPACK (through numpy/scipy) does the factorisations; this module pins the
contracts the learners rely on: pencil orientation, ridge guarding, rank
checks and bottleneck matching of point sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import NonConvergence, RankDeficient, SingularPencil

RIDGE_RTOL = 1e-12
RANK_RTOL = 1e-12


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray


def _square(matrix, name="matrix"):
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def eig(matrix) -> EigenPairs:
    """Eigenvalues and unit-norm eigenvectors of a square complex matrix."""
    a = _square(matrix)
    try:
        values, vectors = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    norms = np.linalg.norm(vectors, axis=0)
    norms[norms == 0] = 1.0
    return EigenPairs(values=values, vectors=vectors / norms)


def generalized_eig(a, b):
    """Values ``lam`` with ``a v = lam b v``, computed as eig(b^-1 a).

    ``b`` is ridge-regularised when its smallest singular value falls below
    ``1e-12 * ||b||``.  Raises :class:`SingularPencil` when ``a`` and ``b``
    share a numerical null direction.
    """
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"pencil shapes differ: {a.shape} vs {b.shape}")
    sb = np.linalg.svd(b, compute_uv=False)
    scale = max(sb[0], np.linalg.norm(a, 2), np.finfo(float).tiny)
    if sb[-1] < RIDGE_RTOL * max(sb[0], np.finfo(float).tiny):
        joint = np.linalg.svd(np.vstack([a, b]), compute_uv=False)
        if joint[-1] < RIDGE_RTOL * scale:
            raise SingularPencil("pencil matrices share a null direction")
        b = b + RIDGE_RTOL * max(sb[0], scale) * np.eye(b.shape[0])
    try:
        m = np.linalg.solve(b, a)
    except np.linalg.LinAlgError as exc:
        raise SingularPencil(str(exc)) from exc
    return eig(m).values


def truncated_svd(matrix, k):
    """Top-``k`` singular triplets ``(U_k, s_k, Vh_k)`` with ``s`` descending."""
    a = np.asarray(matrix, dtype=np.complex128)
    if not 1 <= k <= min(a.shape):
        raise ValueError(f"k={k} outside [1, {min(a.shape)}]")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return u[:, :k], s[:k], vh[:k, :]


def least_squares(a, b):
    """Minimiser of ``||a x - b||_2`` for a tall, full-column-rank ``a``."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ValueError(f"least_squares needs rows >= cols, got {a.shape}")
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] < RANK_RTOL * s[0]:
        raise RankDeficient(f"sigma_min/sigma_max = {s[-1] / s[0]:.3e}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x


def _perfect_matching(dist, threshold):
    n = dist.shape[0]
    adj = csr_matrix((dist <= threshold).astype(np.int8))
    match = maximum_bipartite_matching(adj, perm_type="column")
    return np.all(match >= 0) and len(match) == n


def match_points(estimated, truth):
    """Bottleneck matching between two equal-size point sets.

    Returns ``(perm, max_distance)`` where ``estimated[i]`` is paired with
    ``truth[perm[i]]`` and the largest paired distance is minimal.  Among
    bottleneck-optimal pairings the one with least total distance is chosen.
    """
    est = np.atleast_2d(np.asarray(estimated, dtype=np.float64))
    tru = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if est.shape != tru.shape:
        raise ValueError(f"point sets differ in shape: {est.shape} vs {tru.shape}")
    dist = np.linalg.norm(est[:, None, :] - tru[None, :, :], axis=-1)
    levels = np.unique(dist)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching(dist, levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    bottleneck = levels[lo]
    cost = np.where(dist <= bottleneck, dist, dist.max() * len(dist) + 1.0)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, float(dist[np.arange(len(perm)), perm].max())

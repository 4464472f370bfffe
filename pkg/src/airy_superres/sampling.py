"""Photon simulation from superpositions of Airy disks.

Radii are drawn by inverting the encircled-energy curve
``1 - J0(t)^2 - J1(t)^2`` (``t = r / sigma``), whose derivative is the radial
marginal ``2 J1(t)^2 / t`` of the Airy density.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .airy_core import bessel_scalar

CHUNK_SIZE = 1 << 18
_POISSON_STREAM = 1 << 31
_TABLE_END = 64.0
_TABLE_STEP = 1.0 / 256.0


@dataclass
class SuperpositionModel:
    """Mixture of ``k`` Airy disks sharing one spread parameter."""

    weights: np.ndarray
    centers: np.ndarray
    sigma: float
    label: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        self.sigma = float(self.sigma)
        if len(self.weights) == 0 or len(self.weights) != len(self.centers):
            raise ValueError("weights and centers must be non-empty and equally long")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers must be finite")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def min_separation(self) -> float:
        if self.k < 2:
            return math.inf
        d = np.linalg.norm(self.centers[:, None] - self.centers[None], axis=-1)
        return float(d[np.triu_indices(self.k, 1)].min())

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.centers, axis=1).max())

    def density(self, points):
        from .airy_core import airy_psf

        pts = np.asarray(points, dtype=np.float64)
        out = np.zeros(pts.shape[:-1])
        for w, c in zip(self.weights, self.centers):
            if w > 0:
                out = out + w * airy_psf(pts, c, self.sigma)
        return out

    def fourier(self, freqs):
        """Closed-form transform ``sum_j w_j * OTF(|f|) * exp(-2 pi i <mu_j, f>)``."""
        from .airy_core import otf

        f = np.atleast_2d(np.asarray(freqs, dtype=np.float64))
        phase = np.exp(-2j * np.pi * (f @ self.centers.T))
        return otf(np.linalg.norm(f, axis=1), self.sigma) * (phase @ self.weights)

    def to_dict(self):
        d = {
            "sigma": self.sigma,
            "weights": self.weights.tolist(),
            "centers": self.centers.tolist(),
        }
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            weights=d["weights"],
            centers=d["centers"],
            sigma=d["sigma"],
            label=d.get("label", ""),
        )


@dataclass
class PhotonBatch:
    points: np.ndarray
    sigma: float
    granularity: float = 0.0
    seed: int = 0
    poisson: bool = False
    n_requested: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def metadata(self):
        return {
            "sigma": self.sigma,
            "n": len(self.points),
            "n_requested": self.n_requested or len(self.points),
            "seed": self.seed,
            "granularity": self.granularity,
            "poisson": self.poisson,
        }


@njit(cache=True)
def _survival(t):
    # 1 - CDF(t) = J0(t)^2 + J1(t)^2
    a = bessel_scalar(0, t)
    b = bessel_scalar(1, t)
    return a * a + b * b


@njit(cache=True)
def _radial_density(t):
    if t < 1e-8:
        return 0.5 * t
    b = bessel_scalar(1, t)
    return 2.0 * b * b / t


def radial_cdf(t):
    """Encircled energy ``1 - J0(t)^2 - J1(t)^2`` of a unit-sigma Airy disk."""
    from .airy_core import bessel_j

    t = np.asarray(t, dtype=np.float64)
    return 1.0 - bessel_j(0, t) ** 2 - bessel_j(1, t) ** 2


def radial_density(t):
    """Radial marginal ``2 J1(t)^2 / t`` of a unit-sigma Airy disk."""
    from .airy_core import bessel_j

    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, 2.0 * bessel_j(1, t) ** 2 / safe, 0.0)


@njit(cache=True)
def _build_table(n):
    ts = np.empty(n)
    surv = np.empty(n)
    for i in range(n):
        ts[i] = i * (_TABLE_END / (n - 1))
        surv[i] = _survival(ts[i])
    surv[0] = 1.0
    for i in range(1, n):
        # the survival curve is nonincreasing; clamp rounding wiggles
        if surv[i] > surv[i - 1]:
            surv[i] = surv[i - 1]
    return ts, surv


_N_TABLE = int(_TABLE_END / _TABLE_STEP) + 1
_TS, _SURV = _build_table(_N_TABLE)


@njit(cache=True)
def _solve_radius(u, ts, surv):
    # Find t with CDF(t) = u.  Work with the survival target v = 1 - u in the
    # upper half so tail radii keep full relative precision.
    if u <= 0.0:
        return 0.0
    use_cdf = u < 0.5
    v = 1.0 - u
    n = ts.shape[0]
    if v >= surv[n - 1]:
        lo_i = 0
        hi_i = n - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            if surv[mid] >= v:
                lo_i = mid
            else:
                hi_i = mid
        lo = ts[lo_i]
        hi = ts[hi_i]
        s_lo = surv[lo_i]
        s_hi = surv[hi_i]
        if s_lo > s_hi:
            t = lo + (s_lo - v) / (s_lo - s_hi) * (hi - lo)
        else:
            t = 0.5 * (lo + hi)
    else:
        t0 = 2.0 / (math.pi * v)
        lo = max(ts[n - 1], 0.5 * t0)
        hi = 2.0 * t0 + 1.0
        while _survival(hi) > v:
            hi *= 2.0
        while lo > ts[n - 1] and _survival(lo) < v:
            lo = max(ts[n - 1], 0.5 * lo)
        t = min(max(t0, lo), hi)
    for _ in range(200):
        tol = 1e-11 + 4e-16 * t
        if hi - lo < tol:
            break
        if use_cdf:
            f = (1.0 - _survival(t)) - u
            df = _radial_density(t)
        else:
            f = v - _survival(t)
            df = _radial_density(t)
        # f is nondecreasing in t in both forms
        if f > 0.0:
            hi = t
        elif f < 0.0:
            lo = t
        else:
            break
        step_ok = df > 0.0
        if step_ok:
            cand = t - f / df
            step_ok = lo < cand < hi
        if step_ok:
            if abs(cand - t) < tol:
                t = cand
                break
            t = cand
        else:
            t = 0.5 * (lo + hi)
    return t


@njit(cache=True, nogil=True)
def _solve_radii(us, ts, surv, out):
    for i in range(us.shape[0]):
        out[i] = _solve_radius(us[i], ts, surv)


def sample_airy_radius(sigma, uniform):
    """Radius ``sigma * t`` with ``1 - J0(t)^2 - J1(t)^2 = uniform``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    u = np.asarray(uniform, dtype=np.float64)
    if np.any((u < 0) | (u >= 1)):
        raise ValueError("uniform must lie in [0, 1)")
    flat = np.ascontiguousarray(np.atleast_1d(u).ravel())
    out = np.empty_like(flat)
    _solve_radii(flat, _TS, _SURV, out)
    out *= sigma
    if u.ndim == 0:
        return float(out[0])
    return out.reshape(u.shape)


def chunk_rng(seed, chunk):
    """Counter-based generator for one chunk's independent substream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))
    return np.random.Generator(np.random.Philox(ss))


def snap_to_grid(points, granularity):
    """Round points to a square grid of pitch ``granularity / sqrt(2)``.

    Each point moves by at most ``granularity / 2``.
    """
    if granularity <= 0:
        return points
    pitch = granularity / math.sqrt(2.0)
    return np.rint(points / pitch) * pitch


def _sample_chunk(model, cumw, seed, chunk, size, granularity):
    rng = chunk_rng(seed, chunk)
    comp = np.searchsorted(cumw, rng.random(size), side="right")
    np.minimum(comp, len(cumw) - 1, out=comp)
    u = rng.random(size)
    radii = np.empty(size)
    _solve_radii(u, _TS, _SURV, radii)
    radii *= model.sigma
    angle = (2.0 * math.pi) * rng.random(size)
    pts = model.centers[comp].copy()
    pts[:, 0] += radii * np.cos(angle)
    pts[:, 1] += radii * np.sin(angle)
    return snap_to_grid(pts, granularity)


def sample(model: SuperpositionModel, n, seed, granularity=0.0, poisson=False, workers=None):
    """Draw photons from ``model``.

    With ``poisson`` the photon count is itself Poisson(n).  With
    ``granularity > 0`` every photon is snapped to a grid, moving it by at most
    ``granularity``.  Output depends only on the arguments, never on
    ``workers``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if granularity < 0:
        raise ValueError("granularity must be nonnegative")
    count = int(n)
    if poisson:
        count = int(chunk_rng(seed, _POISSON_STREAM).poisson(n))
    cumw = np.cumsum(model.weights)
    cumw /= cumw[-1]
    sizes = [min(CHUNK_SIZE, count - start) for start in range(0, count, CHUNK_SIZE)]
    jobs = [(model, cumw, seed, i, size, granularity) for i, size in enumerate(sizes)]
    if workers is not None and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _sample_chunk(*job), jobs))
    else:
        parts = [_sample_chunk(*job) for job in jobs]
    points = np.concatenate(parts) if parts else np.empty((0, 2))
    return PhotonBatch(
        points=points,
        sigma=model.sigma,
        granularity=float(granularity),
        seed=int(seed),
        poisson=bool(poisson),
        n_requested=int(n),
    )

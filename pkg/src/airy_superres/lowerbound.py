"""Hardness instances and total-variation estimates.

Two families of pairs of superpositions that are hard to tell apart:

* interleaved triangular lattices whose signed weight vector is the Fourier
  dual of a product of Fejer-kernel powers, so its exponential sum is tiny on
  the whole passband;
* points on a line whose weights match all moments up to degree ``k - 2``.

TV distances between the resulting Airy mixtures are estimated by importance
sampling from a heavy-tailed proposal.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .airy_core import GAMMA_LOWER
from .errors import BadShape, SingularSystem
from .sampling import CHUNK_SIZE, SuperpositionModel, chunk_rng

PIVOT_FLOOR = 1e-14
PARETO_INDEX = 2.0 / 3.0


@dataclass
class FejerCoefficients:
    ell: int
    r: int
    coeffs: np.ndarray

    @property
    def offsets(self):
        half = (len(self.coeffs) - 1) // 2
        return np.arange(-half, half + 1)


@dataclass
class LatticeInstance:
    rho: SuperpositionModel
    rho_prime: SuperpositionModel
    u: np.ndarray
    nu: np.ndarray
    ell: int
    r: int
    epsilon: float
    m: int
    sigma: float
    alpha: np.ndarray
    scale_even: float
    scale_odd: float

    @property
    def k(self):
        return len(self.u)

    @property
    def delta(self):
        return 2.0 / self.m


@dataclass
class MomentMatchInstance:
    rho: SuperpositionModel
    rho_prime: SuperpositionModel
    k: int
    delta: float


def fejer_eval(ell, x):
    """Fejer kernel ``K_ell(x) = (sin(ell pi x) / (ell sin(pi x)))^2``."""
    if ell < 1:
        raise ValueError("ell must be positive")
    x = np.asarray(x, dtype=np.float64)
    s = np.sin(np.pi * x)
    near = np.abs(s) < 1e-8
    safe = np.where(near, 1.0, s)
    closed = (np.sin(ell * np.pi * x) / (ell * safe)) ** 2
    if np.any(near):
        j = np.arange(-ell, ell + 1)
        series = ((ell - np.abs(j)) * np.cos(2 * np.pi * np.multiply.outer(x, j))).sum(-1) / ell**2
        closed = np.where(near, series, closed)
    return float(closed) if closed.ndim == 0 else closed


def fejer_power_coeffs(ell, r) -> FejerCoefficients:
    """Fourier coefficients of ``K_ell^r`` on offsets ``-r*ell .. r*ell``."""
    if ell < 2 or ell % 2:
        raise ValueError("ell must be a positive even integer")
    if r < 1:
        raise ValueError("r must be positive")
    j = np.arange(-ell, ell + 1)
    base = (ell - np.abs(j)) / ell**2
    out = np.array([1.0])
    for _ in range(r):
        out = np.convolve(out, base)
    return FejerCoefficients(ell=ell, r=r, coeffs=out)


def lattice_instance(ell, r, epsilon=None, m=5, literal_alpha=False) -> LatticeInstance:
    """Interleaved triangular-lattice pair with ``k = (2 r ell + 1)^2`` centers.

    ``m`` (odd) fixes the separation ``2/m`` and, with ``epsilon``, the spread.
    The default ``epsilon`` is ``4/ell`` when that is below one, else 1/2.
    By default the Fejer coefficients are used unchanged; ``literal_alpha``
    multiplies the off-zero ones by ``m`` before the per-class normalization.
    """
    if m < 1 or m % 2 == 0:
        raise BadShape("m must be an odd positive integer")
    if ell < 2 or ell % 2 or r < 1:
        raise BadShape("need even ell >= 2 and r >= 1")
    if epsilon is None:
        epsilon = 4.0 / ell if 4.0 / ell < 1 else 0.5
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    sigma = 2.0 / ((1.0 - epsilon) * GAMMA_LOWER * math.pi * m)
    fc = fejer_power_coeffs(ell, r)
    js = fc.offsets
    alpha = fc.coeffs.copy()
    if literal_alpha:
        alpha = np.where(js == 0, alpha, m * alpha)
    j1, j2 = np.meshgrid(js, js, indexing="ij")
    h = np.outer(alpha, alpha)
    sign = np.where((j1 + j2) % 2 == 0, 1.0, -1.0)
    even = sign > 0
    scale_even = 1.0 / h[even].sum()
    scale_odd = 1.0 / h[~even].sum()
    u = h * sign * np.where(even, scale_even, scale_odd)
    delta = 2.0 / m
    nu = np.stack([0.5 * delta * j1, 0.5 * delta * math.sqrt(3.0) * j2], axis=-1)
    flat_u = u.ravel()
    flat_nu = nu.reshape(-1, 2)
    pos = flat_u > 0
    rho = SuperpositionModel(flat_u[pos] / flat_u[pos].sum(), flat_nu[pos], sigma, label="lattice-even")
    neg = flat_u < 0
    rho_p = SuperpositionModel(-flat_u[neg] / -flat_u[neg].sum(), flat_nu[neg], sigma, label="lattice-odd")
    return LatticeInstance(
        rho=rho, rho_prime=rho_p, u=flat_u, nu=flat_nu, ell=ell, r=r,
        epsilon=float(epsilon), m=m, sigma=sigma, alpha=alpha,
        scale_even=scale_even, scale_odd=scale_odd,
    )


def _phase_factor(coords, coeff, freqs):
    # sum_j coeff_j exp(-2 pi i coords_j * f) for each f
    return np.exp(-2j * np.pi * np.multiply.outer(freqs, coords)) @ coeff


def exp_sum_sup(instance: LatticeInstance, grid_resolution=512):
    """Max of ``|sum u_j exp(-2 pi i <nu_j, x>)|^2`` over a polar grid of the passband.

    The grid has ``grid_resolution`` radii in ``(0, 1/(pi sigma)]`` (plus the
    origin) and ``grid_resolution`` angles.
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    n = grid_resolution
    radius = 1.0 / (math.pi * instance.sigma)
    rad = np.concatenate([[0.0], radius * np.arange(1, n + 1) / n])
    ang = 2.0 * math.pi * np.arange(n) / n
    x1 = np.multiply.outer(rad, np.cos(ang)).ravel()
    x2 = np.multiply.outer(rad, np.sin(ang)).ravel()
    return float(np.max(np.abs(lattice_exp_sum(instance, np.column_stack([x1, x2]))) ** 2))


def lattice_exp_sum(instance: LatticeInstance, x):
    """``sum_j u_j exp(-2 pi i <nu_j, x>)`` at points ``x`` of shape (n, 2).

    ``u`` is ``alpha (x) alpha`` with signs, scaled by one factor per sign
    class, so the sum splits into products of one-dimensional sums.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    half = (len(instance.alpha) - 1) // 2
    js = np.arange(-half, half + 1)
    alt = instance.alpha * (-1.0) ** js
    c1 = 0.5 * instance.delta * js
    c2 = 0.5 * instance.delta * math.sqrt(3.0) * js
    plain = _phase_factor(c1, instance.alpha, x[:, 0]) * _phase_factor(c2, instance.alpha, x[:, 1])
    signed = _phase_factor(c1, alt, x[:, 0]) * _phase_factor(c2, alt, x[:, 1])
    even = 0.5 * (plain + signed)
    odd = 0.5 * (plain - signed)
    return instance.scale_even * even - instance.scale_odd * odd


def moment_match_instance(k, delta, sigma=1.0 / math.pi) -> MomentMatchInstance:
    """Two ``k/2``-point configurations on a line agreeing on moments ``0..k-2``."""
    if k < 2 or k % 2:
        raise BadShape("k must be an even integer >= 2")
    if delta <= 0:
        raise ValueError("delta must be positive")
    half = k // 2
    i = np.arange(1, half + 1)
    a = 0.5 * delta * (2 * i - (k + 3) / 2.0)
    b = 0.5 * delta * (2 * i - (k + 1) / 2.0)
    lam = _solve_moment_system(a, b, k)
    rho = SuperpositionModel(lam[:half], np.column_stack([a, np.zeros(half)]), sigma, label="moment-a")
    rho_p = SuperpositionModel(lam[half:], np.column_stack([b, np.zeros(half)]), sigma, label="moment-b")
    return MomentMatchInstance(rho=rho, rho_prime=rho_p, k=k, delta=float(delta))


def _solve_moment_system(a, b, k):
    half = len(a)
    nodes = np.concatenate([a, b])
    span = np.abs(nodes).max()
    t = nodes / span if span > 0 else nodes
    # Chebyshev rows span the same polynomials as monomials of degree <= k-2
    rows = [np.concatenate([np.ones(half), np.zeros(half)]),
            np.concatenate([np.zeros(half), np.ones(half)])]
    for deg in range(1, k - 1):
        tv = np.polynomial.chebyshev.chebval(t, [0] * deg + [1])
        rows.append(np.concatenate([tv[:half], -tv[half:]]))
    mat = np.array(rows)
    rhs = np.zeros(k)
    rhs[0] = rhs[1] = 1.0
    lu, piv = lu_factor(mat, check_finite=True)
    if np.min(np.abs(np.diag(lu))) < PIVOT_FLOOR:
        raise SingularSystem(f"pivot {np.min(np.abs(np.diag(lu))):.3e}")
    lam = lu_solve((lu, piv), rhs)
    neg = lam < 0
    if np.any(lam < -1e-12):
        raise SingularSystem("moment-matching weights are negative")
    lam[neg] = 0.0
    lam[:half] /= lam[:half].sum()
    lam[half:] /= lam[half:].sum()
    return lam


def _kernel_scale(sigma):
    return math.pi * sigma


def _proposal_parts(instance):
    rho, rho_p = instance.rho, instance.rho_prime
    centers = np.vstack([rho.centers, rho_p.centers])
    weights = np.concatenate([rho.weights, rho_p.weights]) / 2.0
    return centers, weights, _kernel_scale(rho.sigma)


def kernel_radius_density(t):
    """Radial density of the proposal kernel at unit scale."""
    t = np.asarray(t, dtype=np.float64)
    safe = np.maximum(t, 1e-300)
    return np.where(t <= 1.0, 0.5, 0.5 * PARETO_INDEX * safe ** (-1.0 - PARETO_INDEX))


def proposal_density(points, instance):
    """Density of the proposal: the centers convolved with a heavy-tailed kernel."""
    centers, weights, s0 = _proposal_parts(instance)
    pts = np.asarray(points, dtype=np.float64)
    flat = pts.reshape(-1, 2)
    out = np.zeros(len(flat))
    for c, w in zip(centers, weights):
        rad = np.linalg.norm(flat - c, axis=1) / s0
        safe = np.maximum(rad, 1e-300)
        out += w * kernel_radius_density(rad) / (2.0 * math.pi * safe * s0 * s0)
    return out.reshape(pts.shape[:-1])


def _proposal_chunk(instance, seed, chunk, size):
    centers, weights, s0 = _proposal_parts(instance)
    rng = chunk_rng(seed, chunk)
    comp = np.searchsorted(np.cumsum(weights), rng.random(size) * weights.sum(), side="right")
    np.minimum(comp, len(weights) - 1, out=comp)
    heavy = rng.random(size) < 0.5
    u = rng.random(size)
    # Pareto on [1, inf) with survival t^(-2/3): t = (1 - u)^(-3/2)
    t = np.where(heavy, (1.0 - u) ** (-1.0 / PARETO_INDEX), u)
    ang = 2.0 * math.pi * rng.random(size)
    pts = centers[comp] + (s0 * t)[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    return pts


def proposal_sample(instance, n, seed):
    """``n`` draws from the proposal, reproducible per ``seed``."""
    sizes = [min(CHUNK_SIZE, n - s) for s in range(0, n, CHUNK_SIZE)]
    return np.concatenate([_proposal_chunk(instance, seed, i, sz) for i, sz in enumerate(sizes)])


def _tv_chunk(instance, seed, chunk, size):
    pts = _proposal_chunk(instance, seed, chunk, size)
    mu = proposal_density(pts, instance)
    d0 = instance.rho.density(pts)
    d1 = instance.rho_prime.density(pts)
    return np.abs(d0 - d1) / mu


def tv_estimate(instance, n_samples, seed, workers=None):
    """Importance-sampling estimate of the TV distance between the pair.

    Returns ``{"tv", "std_error", "l1", "n"}`` where ``tv`` is half the mean
    of ``|rho - rho'| / mu`` and ``std_error`` its jackknife standard error.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    sizes = [min(CHUNK_SIZE, n_samples - s) for s in range(0, n_samples, CHUNK_SIZE)]
    jobs = list(enumerate(sizes))
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _tv_chunk(instance, seed, *j), jobs))
    else:
        parts = [_tv_chunk(instance, seed, *j) for j in jobs]
    vals = np.concatenate(parts)
    n = len(vals)
    total = vals.sum()
    # leave-one-out means; for a sample mean this equals s / sqrt(n)
    loo = (total - vals) / (n - 1)
    jk = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    l1 = total / n
    return {"tv": 0.5 * l1, "std_error": 0.5 * jk, "l1": l1, "n": n}


def tv_sweep(family, ks, deltas, n_samples, seed, sigma=1.0 / math.pi, workers=None):
    """TV over a grid of ``(delta, k)`` with common random numbers.

    ``family`` is ``"moment-match"``.  Deltas are absolute separations.
    Returns a list of row dicts ``delta, k, tv, std_error, n``.
    """
    if family != "moment-match":
        raise ValueError(f"unsupported family {family!r}")
    rows = []
    for k in ks:
        for d in deltas:
            inst = moment_match_instance(int(k), float(d), sigma)
            est = tv_estimate(inst, n_samples, seed, workers=workers)
            rows.append({"delta": float(d), "k": int(k), "tv": est["tv"],
                         "std_error": est["std_error"], "n": est["n"]})
    return rows


__all__ = [
    "FejerCoefficients",
    "LatticeInstance",
    "MomentMatchInstance",
    "exp_sum_sup",
    "fejer_eval",
    "fejer_power_coeffs",
    "lattice_exp_sum",
    "lattice_instance",
    "moment_match_instance",
    "proposal_density",
    "proposal_sample",
    "tv_estimate",
    "tv_sweep",
]

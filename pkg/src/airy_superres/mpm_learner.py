"""Sub-diffraction learning by the matrix pencil method on projected moments.

Along a unit direction ``v`` the exponential sum sampled at ``l * v / 4k``
gives moments ``v_l = sum_j w_j alpha_j^l`` with
``alpha_j = exp(2 pi i <mu_j, v> / 4k)``.  A k x k Hankel pencil recovers the
``alpha_j``; two nearby directions are then paired and solved for 2-D
centers, and many such candidates are aggregated robustly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDirections,
    NumericalError,
    PartitionMismatch,
    PencilFailure,
)
from .numerics import generalized_eig
from .otf_oracle import (
    ExactOracle,
    PhotonOracle,
    Rescaling,
    _Oracle,
    certified_eta,
    estimate_radius,
)
from .sampling import PhotonBatch, SuperpositionModel

log = logging.getLogger(__name__)

C_T = 48
ALPHA_FLOOR = 1e-8
DET_FLOOR = 1e-14
WIDE_FRACTION = 0.78
WRAP_STEP_CAP = 0.7


@dataclass
class ProjectedEstimate:
    direction: np.ndarray
    proj_centers: np.ndarray
    weights: np.ndarray


@dataclass
class ParameterEstimate:
    weights: np.ndarray
    centers: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.weights)

    def to_dict(self):
        return {
            "weights": [float(w) for w in self.weights],
            "centers": [[float(a), float(b)] for a, b in self.centers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            centers=np.asarray(d["centers"], dtype=np.float64).reshape(-1, 2),
            meta=dict(d.get("meta", {})),
        )


@dataclass
class ConditioningReport:
    delta_prime: float
    k: int
    sigma_min_lb: float
    kappa_ub: float
    measured_sigma_min: float = math.nan
    measured_kappa: float = math.nan


def vandermonde(alphas, rows=None):
    """Square (or ``rows`` x k) Vandermonde matrix ``V[l, j] = alpha_j ** l``."""
    a = np.asarray(alphas, dtype=np.complex128)
    n = len(a) if rows is None else rows
    return a[None, :] ** np.arange(n)[:, None]


def mpm_from_moments(moments, k, step=None):
    """Recover ``(proj_centers, weights)`` from moments ``v_0 .. v_{2k-1}``.

    ``v_l = sum_j w_j alpha_j^l`` with ``alpha_j = exp(2 pi i m_j * step)``
    and ``step = 1/4k`` by default.
    """
    if step is None:
        step = 1.0 / (4 * k)
    v = np.asarray(moments, dtype=np.complex128)
    if len(v) < 2 * k:
        raise ValueError(f"need {2 * k} moments, got {len(v)}")
    idx = np.arange(k)[:, None] + np.arange(k)[None, :]
    x = v[idx]
    y = v[idx + 1]
    alphas = generalized_eig(y, x)
    mags = np.abs(alphas)
    if np.any(~np.isfinite(alphas)) or np.any(mags < ALPHA_FLOOR):
        raise PencilFailure("pencil eigenvalue collapsed to zero")
    unit = alphas / mags
    angles = np.angle(unit)
    if np.any(np.abs(angles) >= math.pi / 2):
        raise PencilFailure(
            f"phase {np.abs(angles).max():.4f} outside the no-wrap margin pi/2"
        )
    proj = angles / (2 * math.pi * step)
    order = np.argsort(proj)
    proj = proj[order]
    unit = unit[order]
    try:
        weights = np.linalg.solve(vandermonde(unit), v[:k])
    except np.linalg.LinAlgError as exc:
        raise PencilFailure(f"Vandermonde solve failed: {exc}") from exc
    return proj, weights.real


def modified_mpm(direction, oracle, k, sigma=None, step=None) -> ProjectedEstimate:
    """Projected centers and weights along ``direction`` from 2k oracle queries.

    Queries sit at ``l * step * direction`` for ``l < 2k``; ``step`` defaults
    to ``1/4k``.
    """
    if step is None:
        step = 1.0 / (4 * k)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    if sigma is not None and not math.isclose(sigma, oracle.sigma, rel_tol=1e-9):
        raise ValueError(f"sigma {sigma} disagrees with the oracle's {oracle.sigma}")
    freqs = np.arange(2 * k)[:, None] * d[None, :] * step
    # conj turns exp(-2 pi i <mu, w>) into the alpha^l convention
    moments = np.conj(oracle.exponential_sum(freqs))
    proj, weights = mpm_from_moments(moments, k, step)
    return ProjectedEstimate(direction=d, proj_centers=proj, weights=weights)


def vandermonde_bounds(delta_prime, k, n_random=0, seed=0) -> ConditioningReport:
    """Closed-form conditioning envelopes for phase separation ``delta_prime``.

    ``sigma_min_lb`` and ``kappa_ub`` are the square roots of
    ``(d^k / k^2)^(k-1)`` and ``k^(2k-1) / d^(k(k-1))``.  The measured values
    come from the worst (equispaced at ``delta_prime``) configuration, and from
    ``n_random`` random ones when requested.
    """
    if not 0 < delta_prime <= 1.0 / 16.0:
        raise ValueError("delta_prime must lie in (0, 1/16]")
    d = float(delta_prime)
    lb = math.sqrt((d**k / k**2) ** (k - 1))
    ub = math.sqrt(k ** (2 * k - 1) / d ** (k * (k - 1)))
    configs = [np.arange(k) * d - (k - 1) * d / 2]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        configs.append(random_phases(k, d, rng))
    smin, kap = math.inf, 0.0
    for phases in configs:
        s = np.linalg.svd(vandermonde(np.exp(2j * math.pi * phases)), compute_uv=False)
        smin = min(smin, s[-1])
        kap = max(kap, s[0] / s[-1])
    return ConditioningReport(
        delta_prime=d, k=k, sigma_min_lb=lb, kappa_ub=ub,
        measured_sigma_min=float(smin), measured_kappa=float(kap),
    )


def random_phases(k, delta_prime, rng):
    """k points in [-1/4, 1/4] with minimum gap exactly ``delta_prime``."""
    span = 0.5 - (k - 1) * delta_prime
    if span < 0:
        raise ValueError("separation too large for k points in [-1/4, 1/4]")
    slack = np.sort(rng.uniform(0.0, span, size=k))
    pts = -0.25 + slack + delta_prime * np.arange(k)
    if k > 1:
        # pull one neighbouring pair to the exact minimum gap
        i = int(rng.integers(k - 1))
        pts[i + 1 :] -= pts[i + 1] - pts[i] - delta_prime
    return pts


def pre_consolidate(w1, w2, est1: ProjectedEstimate, est2: ProjectedEstimate):
    """Pair sorted projections from two directions and solve for 2-D centers."""
    a = np.vstack([np.asarray(w1, float), np.asarray(w2, float)])
    det = np.linalg.det(a)
    if abs(det) < DET_FLOOR:
        raise DegenerateDirections(f"|det| = {abs(det):.3e}")
    if len(est1.proj_centers) != len(est2.proj_centers):
        raise ValueError("projected estimates disagree on k")
    o1 = np.argsort(est1.proj_centers)
    o2 = np.argsort(est2.proj_centers)
    rhs = np.vstack([est1.proj_centers[o1], est2.proj_centers[o2]])
    centers = np.linalg.solve(a, rhs).T
    weights = 0.5 * (est1.weights[o1] + est2.weights[o2])
    return ParameterEstimate(weights=weights, centers=centers)


def _components(points, threshold):
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    for i, j in zip(*np.nonzero(np.triu(d <= threshold, 1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    labels = np.array([find(i) for i in range(n)])
    _, labels = np.unique(labels, return_inverse=True)
    return labels


def select(candidates, eps1, eps2, k=None) -> ParameterEstimate:
    """Robust aggregate of candidate estimates.

    Pooled centers with at least ``2T/3`` pooled neighbours (itself included)
    within ``2 * eps1`` survive; survivors are grouped by single linkage at
    ``6 * eps1``; each group reports its median weight and that entry's center.
    """
    if not candidates:
        raise ValueError("select needs at least one candidate")
    if k is None:
        k = candidates[0].k
    t = len(candidates)
    centers = np.concatenate([c.centers for c in candidates])
    weights = np.concatenate([c.weights for c in candidates])
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    keep = (d <= 2 * eps1).sum(axis=1) >= 2 * t / 3
    if not keep.any():
        raise PartitionMismatch("no candidate center has a two-thirds majority nearby")
    centers, weights = centers[keep], weights[keep]
    labels = _components(centers, 6 * eps1)
    groups = labels.max() + 1
    if groups != k:
        raise PartitionMismatch(f"found {groups} groups, expected {k}")
    out_w = np.empty(k)
    out_c = np.empty((k, 2))
    for g in range(k):
        idx = np.nonzero(labels == g)[0]
        idx = idx[np.argsort(weights[idx], kind="stable")]
        pick = idx[(len(idx) - 1) // 2]
        out_w[g] = weights[pick]
        out_c[g] = centers[pick]
    order = np.lexsort((out_c[:, 1], out_c[:, 0]))
    return ParameterEstimate(
        weights=out_w[order], centers=out_c[order], meta={"eps2": eps2, "survivors": int(keep.sum())}
    )


def iteration_rng(seed, t):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(t),))
    return np.random.Generator(np.random.Philox(ss))


def required_eta(k, delta_prime, lambda_min):
    """Noise level under which the pencil is certified stable (unit constant)."""
    return lambda_min**2 * delta_prime ** (k * k) * k ** (-2 * k - 0.5)


def working_frame(source, sigma=None, radius=None, eta=0.0, seed=0, beta=0.05):
    """Oracle in the working frame (spread at most 1/pi, radius at most 1/3).

    ``source`` may be a :class:`PhotonBatch`, a :class:`SuperpositionModel`
    (closed-form oracle with optional noise ``eta``) or an existing oracle,
    which is used as-is.
    """
    if isinstance(source, _Oracle):
        return source, Rescaling()
    if isinstance(source, SuperpositionModel):
        sig = source.sigma if sigma is None else sigma
        shift = np.zeros(2)
        rad = source.radius if radius is None else radius
    elif isinstance(source, PhotonBatch):
        sig = source.sigma if sigma is None else sigma
        est, shift = estimate_radius(source.points, sig)
        rad = est if radius is None else radius
    else:
        raise TypeError(f"unsupported source {type(source).__name__}")
    scale = 1.0 / (math.pi * sig)
    if rad > 0:
        scale = min(scale, 1.0 / (3.0 * rad))
    rs = Rescaling(scale=scale, shift=tuple(float(s) for s in shift))
    if isinstance(source, SuperpositionModel):
        work = SuperpositionModel(
            weights=source.weights, centers=rs.to_work(source.centers), sigma=sig * scale
        )
        return ExactOracle(work, eta=eta, seed=seed), rs
    batch = PhotonBatch(
        points=rs.to_work(source.points),
        sigma=sig * scale,
        granularity=source.granularity * scale,
        seed=source.seed,
    )
    return PhotonOracle(batch, beta=beta), rs


def wide_step(k, sigma):
    """Largest moment spacing keeping ``(2k-1) * step`` near 0.78 of the cutoff.

    Capped at 0.7 so projections up to 1/3 stay clear of phase wraparound.
    """
    return min(WIDE_FRACTION / ((2 * k - 1) * math.pi * sigma), WRAP_STEP_CAP)


def _directions(rng, k, separation, rotation):
    phi = rng.uniform(0.0, 2.0 * math.pi)
    w1 = np.array([math.cos(phi), math.sin(phi)])
    if k == 1:
        return w1, np.array([-w1[1], w1[0]])
    theta = math.pi / (3 * k * k * (k - 1))
    if rotation == "chord":
        upsilon = separation * math.sin(theta) / 8.0
        turn = 2.0 * math.asin(min(upsilon / 2.0, 1.0))
    elif rotation == "angle":
        turn = theta
    else:
        raise ValueError(f"unknown rotation rule {rotation!r}")
    if rng.random() < 0.5:
        turn = -turn
    c, s = math.cos(turn), math.sin(turn)
    return w1, np.array([c * w1[0] - s * w1[1], s * w1[0] + c * w1[1]])


def _candidates(oracle, k, t_target, separation, seed, rotation, step):
    candidates, directions = [], []
    failures = 0
    attempt = 0
    while len(candidates) < t_target and attempt < 2 * t_target:
        rng = iteration_rng(seed, attempt)
        attempt += 1
        w1, w2 = _directions(rng, k, separation, rotation)
        try:
            e1 = modified_mpm(w1, oracle, k, step=step)
            e2 = modified_mpm(w2, oracle, k, step=step)
            cand = pre_consolidate(w1, w2, e1, e2)
        except NumericalError as exc:
            failures += 1
            log.debug("iteration %d failed: %s", attempt - 1, exc)
            continue
        candidates.append(cand)
        directions.append([w1.tolist(), w2.tolist()])
    if not candidates:
        raise PartitionMismatch("every iteration failed")
    return candidates, directions, failures


def _aggregate(candidates, k, eps1, eps2, separation, adaptive):
    # Start at eps1/3; if no majority forms, double while 6*eps' stays below
    # the separation so distinct centers cannot merge.
    eps = eps1 / 3.0
    while True:
        try:
            return select(candidates, eps, eps2, k), eps
        except PartitionMismatch:
            if not adaptive or k == 1 or 12.0 * eps >= separation:
                raise
            eps *= 2.0


def learn_airy_disks(
    source,
    k,
    eps1,
    eps2,
    delta,
    sigma=None,
    separation=None,
    seed=0,
    radius=None,
    eta=0.0,
    beta=0.05,
    rotation="angle",
    step="wide",
    adaptive=True,
) -> ParameterEstimate:
    """Learn a superposition of ``k`` Airy disks, including below the Abbe limit.

    ``eps1``, ``separation`` and ``radius`` are in data units.  With
    ``separation`` unknown a coarse pass at a quarter of the Abbe limit is
    refined once from its estimated centers; the guess is doubled while that
    pass cannot form k groups.

    ``rotation`` picks the angle between paired directions: ``"angle"`` turns
    by the pairing budget theta, ``"chord"`` by the much smaller chord tied to
    the separation.  ``step`` is the moment spacing: ``"wide"``, ``"narrow"``
    (1/4k) or a number in working units.  With ``adaptive`` the aggregation
    radius is doubled when candidates are too scattered for ``eps1``; the
    radius actually used is reported in ``meta``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if eps1 <= 0 or eps2 <= 0:
        raise ValueError("eps1 and eps2 must be positive")
    oracle, rs = working_frame(source, sigma, radius, eta=eta, seed=seed, beta=beta)
    if step == "wide":
        step_w = wide_step(k, oracle.sigma)
    elif step == "narrow":
        step_w = 1.0 / (4 * k)
    else:
        step_w = float(step)
    eps1_w = eps1 * rs.scale
    t_target = max(1, math.ceil(C_T * math.log(1.0 / delta)))
    bootstrap = separation is None
    sep_w = (math.pi * oracle.sigma / 4.0) if bootstrap else separation * rs.scale

    def run(sep):
        cands, dirs, fails = _candidates(oracle, k, t_target, sep, seed, rotation, step_w)
        est, eps_used = _aggregate(cands, k, eps1_w, eps2, sep, adaptive)
        return est, eps_used, dirs, fails, len(cands)

    while True:
        try:
            est, eps_used, directions, failures, successes = run(sep_w)
            break
        except PartitionMismatch:
            # a coarse guess that scatters the candidates is raised, not refined
            if not bootstrap or k == 1 or 2.0 * sep_w > 2.0 / 3.0:
                raise
            sep_w *= 2.0
    if bootstrap and k > 1:
        d = np.linalg.norm(est.centers[:, None] - est.centers[None], axis=-1)
        refined = float(d[np.triu_indices(k, 1)].min())
        if refined > sep_w:
            sep_w = refined
            est, eps_used, directions, failures, successes = run(sep_w)

    queries = 2 * t_target * 2 * k
    meta = dict(est.meta)
    if isinstance(oracle, PhotonOracle):
        eta_cert = certified_eta(oracle.n, queries, beta)
        meta["n_photons"] = oracle.n
    else:
        eta_cert = oracle.eta
    if k > 1:
        theta = math.pi / (3 * k * k * (k - 1))
        dprime = min(sep_w * math.sin(theta) * step_w, 1.0 / 16.0)
        eta_req = required_eta(k, dprime, 1.0 / k)
    else:
        eta_req = 1.0
    if eta_cert > eta_req:
        log.warning(
            "oracle accuracy %.3g falls short of the certified requirement %.3g",
            eta_cert, eta_req,
        )
    if eps_used > eps1_w / 3.0 * (1 + 1e-12):
        log.warning(
            "candidates too scattered for eps1=%g; aggregated at %g (data units)",
            eps1, 3.0 * eps_used / rs.scale,
        )
    meta.update(
        method="mpm",
        k=k,
        seed=int(seed),
        eps1=eps1,
        eps2=eps2,
        delta=delta,
        iterations=t_target,
        successes=successes,
        failures=failures,
        certified_eps1=3.0 * eps_used / rs.scale,
        rotation=rotation,
        step_work=step_w,
        separation_work=sep_w,
        separation_bootstrapped=bootstrap,
        scale=rs.scale,
        shift=list(rs.shift),
        sigma_work=oracle.sigma,
        eta_certified=eta_cert,
        eta_required=eta_req,
        eta_shortfall=bool(eta_cert > eta_req),
        directions=directions,
    )
    centers = rs.from_work(est.centers)
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    return ParameterEstimate(weights=est.weights[order], centers=centers[order], meta=meta)

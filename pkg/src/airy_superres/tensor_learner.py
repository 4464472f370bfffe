"""Above-diffraction learning by tensor decomposition of OTF measurements.

Entries ``T[a, b, i] = F(w_a + w_b + v_i)`` of the deconvolved exponential sum
form a symmetric rank-k tensor ``sum_j lam_j V_j (x) V_j (x) W_j`` with
``V_j[a] = exp(-2 pi i <mu_j, w_a>)``.  Jennrich's simultaneous
diagonalization recovers ``V`` up to column order; two probe rows then read
off the centers and a least-squares fit gives the weights.

All work happens in the frame where the spread is ``1/pi`` (cutoff at unit
frequency), centred on the photons' median.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .airy_core import GAMMA_UPPER
from .errors import (
    CutoffViolation,
    EigCollision,
    MarginTooSmall,
    WhiteningRankDeficient,
)
from .mpm_learner import ParameterEstimate
from .numerics import eig, least_squares, truncated_svd
from .otf_oracle import (
    CUTOFF_GUARD,
    ExactOracle,
    PhotonOracle,
    Rescaling,
    _Oracle,
    certified_eta,
)
from .sampling import PhotonBatch, SuperpositionModel

PROBE = 0.45
MARGIN_FLOOR = 1e-3
WHITEN_RTOL = 1e-12
EIG_GAP_FLOOR = 1e-10


@dataclass
class SteeringFrequencies:
    R: float
    r: float
    v: np.ndarray

    @property
    def rows(self):
        """The three steering frequencies ``r v``, ``2 r v`` and ``0``."""
        return np.array([self.r * self.v, 2.0 * self.r * self.v, [0.0, 0.0]])


@dataclass
class MeasurementTensor:
    entries: np.ndarray
    omegas: np.ndarray
    steering: SteeringFrequencies
    probe: float = PROBE
    meta: dict = field(default_factory=dict)

    @property
    def m_prime(self):
        return self.entries.shape[0]

    @property
    def reference_row(self):
        return self.m_prime - 1

    @property
    def probe_rows(self):
        return self.m_prime - 3, self.m_prime - 2


def default_radii(separation):
    """Frequency radius ``R`` and steering length ``r`` for a given separation.

    ``R = g / 2c`` with ``c = (separation + g) / 2`` and ``g`` the upper
    separation constant.  ``r`` is half of ``1/2 - R`` so that every queried
    frequency stays strictly inside the cutoff.
    """
    c = 0.5 * (separation + GAMMA_UPPER)
    big = GAMMA_UPPER / (2.0 * c)
    return big, 0.5 * (0.5 - big)


def default_m(k, separation, delta):
    gap = min(separation - GAMMA_UPPER, 1.0)
    m = math.ceil(0.1 * k * k * math.log(k / delta) / gap) if gap > 0 else 200
    return int(min(max(m, 2 * k, 8), 200))


def design_frequencies(m, R, rng, probe=PROBE):
    """``m`` frequencies uniform in the disk of radius ``R``, then probes and zero."""
    rad = R * np.sqrt(rng.random(m))
    ang = 2.0 * math.pi * rng.random(m)
    omegas = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    fixed = np.array([[probe, 0.0], [0.0, probe], [0.0, 0.0]])
    return np.vstack([omegas, fixed])


def _check_budget(R, r, probe, guard=CUTOFF_GUARD):
    reach = max(2.0 * R, R + probe, 2.0 * probe) + 2.0 * r
    if reach >= 1.0 - guard:
        raise CutoffViolation(
            f"largest query radius {reach:.4f} reaches the cutoff guard band"
        )
    return reach


def build_tensor(oracle, k, separation, m=None, seed=0, delta=0.1, R=None, r=None,
                 probe=PROBE) -> MeasurementTensor:
    """Query the oracle on all ``w_a + w_b + v_i`` and deconvolve.

    ``oracle`` must be in the unit-cutoff frame (spread ``1/pi``).
    """
    if not math.isclose(math.pi * oracle.sigma, 1.0, rel_tol=1e-9):
        raise ValueError("build_tensor expects an oracle in the unit-cutoff frame")
    dR, dr = default_radii(separation)
    R = dR if R is None else R
    r = dr if r is None else r
    reach = _check_budget(R, r, probe)
    if m is None:
        m = default_m(k, separation, delta)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    omegas = design_frequencies(m, R, rng, probe)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    steering = SteeringFrequencies(R=R, r=r, v=np.array([math.cos(phi), math.sin(phi)]))
    raw = oracle.tensor_otf(omegas, steering.rows)
    xi = omegas[:, None, None, :] + omegas[None, :, None, :] + steering.rows[None, None]
    from .airy_core import otf

    a_hat = otf(np.linalg.norm(xi, axis=-1), oracle.sigma)
    entries = raw / a_hat
    return MeasurementTensor(
        entries=entries,
        omegas=omegas,
        steering=steering,
        probe=probe,
        meta={"m": m, "seed": int(seed), "max_radius": reach,
              "entry_accuracy": float(oracle.eta / a_hat.min())},
    )


def jennrich(tensor, k):
    """Columns of ``V`` (up to order), each normalised by its reference-row entry."""
    t = tensor.entries if isinstance(tensor, MeasurementTensor) else np.asarray(tensor)
    mp = t.shape[0]
    if not 1 <= k <= mp:
        raise ValueError(f"k={k} outside [1, {mp}]")
    p, s, _ = truncated_svd(t[:, :, 0], k)
    full = np.linalg.svd(t[:, :, 0], compute_uv=False)
    if s[-1] < WHITEN_RTOL * full[0]:
        raise WhiteningRankDeficient(f"s_k / s_1 = {s[-1] / full[0]:.3e}")
    ph = p.conj().T
    e1 = ph @ t[:, :, 0] @ p.conj()
    e2 = ph @ t[:, :, 1] @ p.conj()
    try:
        mhat = e1 @ np.linalg.inv(e2)
    except np.linalg.LinAlgError as exc:
        raise WhiteningRankDeficient(f"second flattening singular: {exc}") from exc
    pairs = eig(mhat)
    vals = pairs.values
    if k > 1:
        gaps = np.abs(vals[:, None] - vals[None, :])[np.triu_indices(k, 1)]
        if gaps.min() < EIG_GAP_FLOOR:
            raise EigCollision(f"eigenvalue gap {gaps.min():.3e}")
    order = np.lexsort((-vals.imag, -vals.real, -np.abs(vals)))[:k]
    u = pairs.vectors[:, order] * math.sqrt(mp)
    vhat = p @ u
    ref = vhat[mp - 1]
    if np.any(np.abs(ref) < 1e-300):
        raise WhiteningRankDeficient("reference row vanished")
    out = vhat / ref[None, :]
    # z / z can round to 1 + O(eps) i; the normalised row is exactly one
    out[mp - 1] = 1.0
    return out


def centers_from_columns(vhat, probe_rows, probe=PROBE):
    """Read centers from the phases at the two probe rows."""
    ra, rb = probe_rows
    x = -np.angle(vhat[ra]) / (2.0 * math.pi * probe)
    y = -np.angle(vhat[rb]) / (2.0 * math.pi * probe)
    return np.column_stack([x, y])


def _frame(source, sigma=None, eta=0.0, seed=0, beta=0.05):
    if isinstance(source, _Oracle):
        if not math.isclose(math.pi * source.sigma, 1.0, rel_tol=1e-9):
            raise ValueError("oracle must be in the unit-cutoff frame (sigma = 1/pi)")
        return source, Rescaling()
    sig = source.sigma if sigma is None else sigma
    if isinstance(source, SuperpositionModel):
        rs = Rescaling(scale=1.0 / (math.pi * sig))
        work = SuperpositionModel(
            weights=source.weights, centers=rs.to_work(source.centers), sigma=1.0 / math.pi
        )
        return ExactOracle(work, eta=eta, seed=seed), rs
    if isinstance(source, PhotonBatch):
        shift = np.median(source.points, axis=0)
        rs = Rescaling(scale=1.0 / (math.pi * sig), shift=tuple(float(s) for s in shift))
        batch = PhotonBatch(
            points=rs.to_work(source.points),
            sigma=1.0 / math.pi,
            granularity=source.granularity * rs.scale,
            seed=source.seed,
        )
        return PhotonOracle(batch, beta=beta), rs
    raise TypeError(f"unsupported source {type(source).__name__}")


def tensor_resolve(source, k, separation, eps1=None, eps2=None, delta=0.1, sigma=None,
                   m=None, seed=0, eta=0.0, beta=0.05, R=None, r=None,
                   probe=PROBE) -> ParameterEstimate:
    """Learn ``k`` well-separated Airy disks; ``separation`` is in data units."""
    oracle, rs = _frame(source, sigma, eta=eta, seed=seed, beta=beta)
    sep_w = separation * rs.scale
    if sep_w - GAMMA_UPPER <= MARGIN_FLOOR:
        raise MarginTooSmall(
            f"separation {sep_w:.4f} (unit-cutoff frame) is not above {GAMMA_UPPER:.4f}"
        )
    tensor = build_tensor(oracle, k, sep_w, m=m, seed=seed, delta=delta, R=R, r=r, probe=probe)
    vhat = jennrich(tensor, k)
    centers_w = centers_from_columns(vhat, tensor.probe_rows, tensor.probe)
    b = oracle.exponential_sum(tensor.omegas)
    weights = least_squares(vhat, b).real

    meta = {
        "method": "tensor",
        "k": k,
        "seed": int(seed),
        "m": tensor.meta["m"],
        "R": tensor.steering.R,
        "r": tensor.steering.r,
        "probe": probe,
        "steering": tensor.steering.v.tolist(),
        "separation_work": sep_w,
        "scale": rs.scale,
        "shift": list(rs.shift),
        "max_query_radius": tensor.meta["max_radius"],
        "eps1": eps1,
        "eps2": eps2,
        "delta": delta,
    }
    if isinstance(oracle, PhotonOracle):
        n_queries = tensor.m_prime * (tensor.m_prime + 1) // 2 * 3 + tensor.m_prime
        meta["n_photons"] = oracle.n
        meta["eta_certified"] = certified_eta(oracle.n, n_queries, beta)
    else:
        meta["eta_certified"] = oracle.eta
    centers = rs.from_work(centers_w)
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    return ParameterEstimate(weights=weights[order], centers=centers[order], meta=meta)


def empirical_kappa(centers, m, R, seed=0):
    """Condition number of the exact ``m x k`` matrix on random frequencies in ``B(R)``."""
    mu = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    omegas = design_frequencies(m, R, rng)[:m]
    v = np.exp(-2j * math.pi * omegas @ mu.T)
    s = np.linalg.svd(v, compute_uv=False)
    if s[-1] <= s[0] * np.finfo(float).eps:
        return math.inf
    return float(s[0] / s[-1])

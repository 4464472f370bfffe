"""Approximate OTF oracle built from photons, and deconvolution by the Airy OTF.

The estimator at frequency ``w`` is the empirical characteristic function
``(1/N) sum_n exp(-2 pi i <w, x_n>)``.  Its real part is the cosine average;
the imaginary part is kept because the exponential sum recovered after
deconvolution is complex whenever the configuration is not point-symmetric.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg.blas import zsyrk

from .airy_core import otf
from .errors import CutoffViolation
from .sampling import PhotonBatch, SuperpositionModel, chunk_rng

CUTOFF_GUARD = 1e-3
LIPSCHITZ_CONST = 2.0 * math.pi * 0.75
_TENSOR_CHUNK = 1 << 15


@njit(cache=True, inline="always")
def _sincos_cycles(p):
    # cos/sin of 2*pi*p: reduce to a half-angle in [-pi/2, pi/2], evaluate
    # Taylor polynomials (truncation < 4e-15), then double the angle.
    u = p - np.rint(p)
    h = math.pi * u
    z = h * h
    c = 1.0 / 6402373705728000.0
    c = 1.0 / 20922789888000.0 - z * c
    c = 1.0 / 87178291200.0 - z * c
    c = 1.0 / 479001600.0 - z * c
    c = 1.0 / 3628800.0 - z * c
    c = 1.0 / 40320.0 - z * c
    c = 1.0 / 720.0 - z * c
    c = 1.0 / 24.0 - z * c
    c = 0.5 - z * c
    c = 1.0 - z * c
    s = 1.0 / 121645100408832000.0
    s = 1.0 / 355687428096000.0 - z * s
    s = 1.0 / 1307674368000.0 - z * s
    s = 1.0 / 6227020800.0 - z * s
    s = 1.0 / 39916800.0 - z * s
    s = 1.0 / 362880.0 - z * s
    s = 1.0 / 5040.0 - z * s
    s = 1.0 / 120.0 - z * s
    s = 1.0 / 6.0 - z * s
    s = h * (1.0 - z * s)
    return c * c - s * s, 2.0 * s * c


@njit(cache=True, fastmath=True, nogil=True)
def _phase_sums(x, y, fx, fy):
    sc = 0.0
    ss = 0.0
    for i in range(x.shape[0]):
        c, s = _sincos_cycles(fx * x[i] + fy * y[i])
        sc += c
        ss += s
    return sc, ss


@njit(cache=True, fastmath=True, nogil=True)
def _exp_rows(x, y, freqs, out):
    # out[a, n] = exp(-2 pi i <freqs[a], (x_n, y_n)>)
    for a in range(freqs.shape[0]):
        fx = freqs[a, 0]
        fy = freqs[a, 1]
        for n in range(x.shape[0]):
            c, s = _sincos_cycles(fx * x[n] + fy * y[n])
            out[a, n] = complex(c, -s)


def required_samples(eta, m, beta):
    """Hoeffding sample size ``ceil(4 ln(2m/beta) / eta^2)`` for ``m`` queries."""
    return int(math.ceil(4.0 * math.log(2.0 * m / beta) / eta**2))


def certified_eta(n, m, beta):
    """Additive accuracy certified with probability ``1 - beta`` by ``n`` photons."""
    return math.sqrt(4.0 * math.log(2.0 * m / beta) / n)


@dataclass
class OtfEstimate:
    frequencies: np.ndarray
    values: np.ndarray
    eta: float
    n_used: int
    granularity: float = 0.0

    @property
    def cosine(self):
        """The real cosine averages."""
        return self.values.real

    @property
    def eta_per_frequency(self):
        norms = np.linalg.norm(self.frequencies, axis=1)
        return self.eta + LIPSCHITZ_CONST * self.granularity * norms


@dataclass
class DeconvolvedEstimate:
    frequencies: np.ndarray
    values: np.ndarray
    accuracy: np.ndarray


def _freq_array(frequencies):
    f = np.asarray(frequencies, dtype=np.float64)
    if f.ndim == 1:
        f = f.reshape(1, 2)
    if f.ndim != 2 or f.shape[1] != 2:
        raise ValueError(f"frequencies must have shape (m, 2), got {f.shape}")
    return f


def _empirical_transform(x, y, freqs):
    n = x.shape[0]
    out = np.empty(len(freqs), dtype=np.complex128)
    for j, (fx, fy) in enumerate(freqs):
        if fx == 0.0 and fy == 0.0:
            out[j] = 1.0
            continue
        sc, ss = _phase_sums(x, y, fx, fy)
        out[j] = complex(sc / n, -ss / n)
    return out


def estimate_otf(batch: PhotonBatch, frequencies, beta=0.05) -> OtfEstimate:
    """Empirical OTF of a photon batch at the given frequencies."""
    if len(batch) == 0:
        raise ValueError("photon batch is empty")
    freqs = _freq_array(frequencies)
    pts = np.asarray(batch.points, dtype=np.float64)
    x = np.ascontiguousarray(pts[:, 0])
    y = np.ascontiguousarray(pts[:, 1])
    values = _empirical_transform(x, y, freqs)
    return OtfEstimate(
        frequencies=freqs,
        values=values,
        eta=certified_eta(len(pts), max(len(freqs), 1), beta),
        n_used=len(pts),
        granularity=batch.granularity,
    )


def check_cutoff(frequencies, sigma, guard=CUTOFF_GUARD):
    s = math.pi * sigma * np.linalg.norm(_freq_array(frequencies), axis=1)
    if np.any(s >= 1.0 - guard):
        raise CutoffViolation(
            f"pi*sigma*|w| reaches {s.max():.6f} >= {1.0 - guard} (guard band)"
        )


def deconvolve(estimate: OtfEstimate, sigma, guard=CUTOFF_GUARD) -> DeconvolvedEstimate:
    """Divide OTF estimates by the Airy OTF, exposing the exponential sum."""
    check_cutoff(estimate.frequencies, sigma, guard)
    a_hat = otf(np.linalg.norm(estimate.frequencies, axis=1), sigma)
    return DeconvolvedEstimate(
        frequencies=estimate.frequencies,
        values=estimate.values / a_hat,
        accuracy=estimate.eta_per_frequency / a_hat,
    )


@dataclass(frozen=True)
class Rescaling:
    """Affine map ``work = (x - shift) * scale`` between data and working frames."""

    scale: float = 1.0
    shift: tuple = (0.0, 0.0)

    def to_work(self, points):
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.shift)) * self.scale

    def from_work(self, points):
        return np.asarray(points, dtype=np.float64) / self.scale + np.asarray(self.shift)

    def sigma_to_work(self, sigma):
        return sigma * self.scale


PSF_QUARTILE = 1.0113  # upper quartile of one coordinate of a unit-sigma Airy disk
RADIUS_SAFETY = 1.25


def estimate_radius(points, sigma=None):
    """Rough radius of the center configuration around the photons' median.

    Uses the interquartile half-width per axis.  When ``sigma`` is given the
    single-disk quartile is removed in quadrature and a safety factor applied.
    Returns ``(radius, median)``.
    """
    pts = np.asarray(points, dtype=np.float64)
    med = np.median(pts, axis=0)
    q25, q75 = np.quantile(pts, [0.25, 0.75], axis=0)
    half = np.maximum(np.abs(q75 - med), np.abs(med - q25))
    if sigma is not None:
        half = RADIUS_SAFETY * np.sqrt(np.maximum(half**2 - (PSF_QUARTILE * sigma) ** 2, 0.0))
    return float(np.linalg.norm(half)), med


def rescale_model(obj, radius=None, target=1.0 / 3.0):
    """Scale a model or photon batch so all centers lie within ``target`` of the origin.

    Returns ``(rescaled, Rescaling)``.  Data already inside the target radius
    is left unchanged.  For a batch without a known ``radius`` the radius is
    estimated from the interquartile box of the photons.
    """
    if radius is None:
        if isinstance(obj, SuperpositionModel):
            radius = obj.radius
        else:
            radius, _ = estimate_radius(obj.points, obj.sigma)
    scale = 1.0 if radius <= target else target / radius
    rs = Rescaling(scale=scale)
    if isinstance(obj, SuperpositionModel):
        out = SuperpositionModel(
            weights=obj.weights.copy(),
            centers=rs.to_work(obj.centers),
            sigma=obj.sigma * scale,
            label=obj.label,
        )
    else:
        out = PhotonBatch(
            points=rs.to_work(obj.points),
            sigma=obj.sigma * scale,
            granularity=obj.granularity * scale,
            seed=obj.seed,
            poisson=obj.poisson,
            n_requested=obj.n_requested,
        )
    return out, rs


class _Oracle:
    """Shared query logic: caching, deconvolution, tensor assembly."""

    sigma: float
    eta: float

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()
        self.n_queries = 0

    def _compute(self, freqs):
        raise NotImplementedError

    def otf_values(self, frequencies):
        freqs = _freq_array(frequencies)
        keys = [(float(fx), float(fy)) for fx, fy in freqs]
        with self._lock:
            missing = sorted({key for key in keys if key not in self._cache})
        if missing:
            vals = self._compute(np.array(missing, dtype=np.float64))
            with self._lock:
                for key, v in zip(missing, vals):
                    if key not in self._cache:
                        self._cache[key] = v
                        self.n_queries += 1
        with self._lock:
            return np.array([self._cache[key] for key in keys], dtype=np.complex128)

    def exponential_sum(self, frequencies):
        """Deconvolved values ``sum_j w_j exp(-2 pi i <mu_j, w>)``."""
        freqs = _freq_array(frequencies)
        check_cutoff(freqs, self.sigma)
        return self.otf_values(freqs) / otf(np.linalg.norm(freqs, axis=1), self.sigma)

    def accuracy(self, frequencies):
        """Certified additive error of :meth:`exponential_sum` per frequency."""
        freqs = _freq_array(frequencies)
        return self.eta / otf(np.linalg.norm(freqs, axis=1), self.sigma)

    def tensor_otf(self, omegas, steering):
        """OTF estimates at ``omegas[a] + omegas[b] + steering[i]``, shape (m, m, s)."""
        om = _freq_array(omegas)
        st = _freq_array(steering)
        xi = om[:, None, None, :] + om[None, :, None, :] + st[None, None, :, :]
        flat = self.otf_values(xi.reshape(-1, 2))
        return flat.reshape(len(om), len(om), len(st))


class PhotonOracle(_Oracle):
    """Empirical-transform oracle over a fixed photon batch.

    Results are cached per frequency, so repeated queries reuse the same
    photons.  Access is thread safe.
    """

    def __init__(self, batch: PhotonBatch, beta=0.05, planned_queries=1):
        super().__init__()
        if len(batch) == 0:
            raise ValueError("photon batch is empty")
        pts = np.asarray(batch.points, dtype=np.float64)
        self.x = np.ascontiguousarray(pts[:, 0])
        self.y = np.ascontiguousarray(pts[:, 1])
        self.sigma = float(batch.sigma)
        self.granularity = float(batch.granularity)
        self.beta = beta
        self.n = len(pts)
        self.eta = certified_eta(self.n, max(planned_queries, 1), beta)

    def certify(self, planned_queries):
        self.eta = certified_eta(self.n, max(planned_queries, 1), self.beta)
        return self.eta

    def _compute(self, freqs):
        return _empirical_transform(self.x, self.y, freqs)

    def tensor_otf(self, omegas, steering):
        # sum_n e_a(x_n) e_b(x_n) w_i(x_n) as a complex-symmetric rank update
        om = np.ascontiguousarray(_freq_array(omegas))
        st = np.ascontiguousarray(_freq_array(steering))
        m, s = len(om), len(st)
        acc = np.zeros((s, m, m), dtype=np.complex128)
        rows = np.empty((m, _TENSOR_CHUNK), dtype=np.complex128)
        wrow = np.empty((s, _TENSOR_CHUNK), dtype=np.complex128)
        for start in range(0, self.n, _TENSOR_CHUNK):
            stop = min(start + _TENSOR_CHUNK, self.n)
            size = stop - start
            xs = self.x[start:stop]
            ys = self.y[start:stop]
            e = rows[:, :size]
            w = wrow[:, :size]
            _exp_rows(xs, ys, om, e)
            _exp_rows(xs, ys, st, w)
            for i in range(s):
                b = e * np.sqrt(w[i])[None, :]
                acc[i] = zsyrk(1.0, b, beta=1.0, c=acc[i], trans=0, overwrite_c=1)
        out = np.empty((m, m, s), dtype=np.complex128)
        for i in range(s):
            upper = np.triu(acc[i])
            out[:, :, i] = (upper + np.triu(upper, 1).T) / self.n
        self.n_queries += m * (m + 1) // 2 * s
        return out


class ExactOracle(_Oracle):
    """Closed-form transform of a known model, optionally with bounded noise.

    Noise on each query is a fixed (seeded) complex perturbation of modulus at
    most ``eta``; repeated queries of one frequency return the same value.
    """

    def __init__(self, model: SuperpositionModel, eta=0.0, seed=0):
        super().__init__()
        self.model = model
        self.sigma = model.sigma
        self.eta = float(eta)
        self._rng = chunk_rng(seed, 0)

    def _compute(self, freqs):
        vals = self.model.fourier(freqs)
        if self.eta > 0:
            radius = self.eta * np.sqrt(self._rng.random(len(freqs)))
            phase = 2 * np.pi * self._rng.random(len(freqs))
            vals = vals + radius * np.exp(1j * phase)
        zero = np.all(freqs == 0.0, axis=1)
        vals[zero] = 1.0
        return vals

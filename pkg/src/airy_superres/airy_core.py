"""Bessel functions, the Airy point-spread function and its transfer function.

The Bessel kernels are scalar numba functions so that the photon sampler can
call them inside its own compiled loops; :func:`bessel_j` is the vectorised
public entry point.

Evaluation strategy for ``J_n`` with ``n`` in {0, 1, 2}:

* ``|x| <= 8``: ascending power series,
* ``8 < |x| <= 25``: Miller backward recurrence normalised by
  ``J_0 + 2 * sum(J_2k) = 1``,
* ``|x| > 25``: Hankel large-argument expansion, truncated at the smallest term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

SERIES_LIMIT = 8.0
ASYMPTOTIC_LIMIT = 25.0

J0_FIRST_ZERO = 2.404825557695773
J1_FIRST_ZERO = 3.831705970207512

#: Lower separation constant sqrt(4/3) of the impossibility construction.
GAMMA_LOWER = math.sqrt(4.0 / 3.0)
#: Upper separation constant 2 j_{0,1} / pi above which the tensor learner applies.
GAMMA_UPPER = 2.0 * J0_FIRST_ZERO / math.pi

#: Uniform envelope |J_nu(r)| <= LANDAU_CONSTANT * |r|^(-1/3).
LANDAU_CONSTANT = 0.7857468704


@njit(cache=True)
def _series(n, x):
    half = 0.5 * x
    term = 1.0
    for i in range(1, n + 1):
        term *= half / i
    total = term
    q = -half * half
    for k in range(1, 60):
        term *= q / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


@njit(cache=True)
def _miller(n, x):
    start = 2 * ((int(x) + 40) // 2)
    inv = 2.0 / x
    jp1 = 0.0
    jn = 1e-30
    norm = 0.0
    j0 = 0.0
    j1 = 0.0
    j2 = 0.0
    for m in range(start, 0, -1):
        jm1 = m * inv * jn - jp1
        jp1 = jn
        jn = jm1
        # jn now holds J_{m-1} (unnormalised)
        order = m - 1
        if order == 2:
            j2 = jn
        elif order == 1:
            j1 = jn
        elif order == 0:
            j0 = jn
        if order > 0 and order % 2 == 0:
            norm += 2.0 * jn
        if abs(jn) > 1e250:
            jn *= 1e-250
            jp1 *= 1e-250
            norm *= 1e-250
            j1 *= 1e-250
            j2 *= 1e-250
    norm += j0
    if n == 0:
        return j0 / norm
    if n == 1:
        return j1 / norm
    return j2 / norm


@njit(cache=True)
def _hankel(n, x):
    mu = 4.0 * n * n
    eight_x = 8.0 * x
    p = 1.0
    q = 0.0
    term = 1.0
    prev = 1.0
    for k in range(1, 60):
        odd = 2 * k - 1
        term *= (mu - odd * odd) / (k * eight_x)
        if abs(term) > abs(prev) or term == 0.0:
            break
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 == 1 else term
        prev = term
        if abs(term) < 1e-17:
            break
    chi = x - (0.5 * n + 0.25) * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


@njit(cache=True)
def bessel_scalar(n, x):
    """J_n(x) for n in {0, 1, 2} and finite real x."""
    ax = abs(x)
    if ax <= SERIES_LIMIT:
        val = _series(n, ax)
    elif ax <= ASYMPTOTIC_LIMIT:
        val = _miller(n, ax)
    else:
        val = _hankel(n, ax)
    if x < 0.0 and n % 2 == 1:
        return -val
    return val


@njit(cache=True)
def _bessel_array(n, xs, out):
    for i in range(xs.shape[0]):
        out[i] = bessel_scalar(n, xs[i])


def bessel_j(order, x):
    """Bessel function of the first kind J_order(x) for order 0, 1 or 2.

    Accepts scalars or arrays; absolute error is below 1e-12 for |x| <= 1e4.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order!r}")
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j requires finite arguments")
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _bessel_array(int(order), flat, out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")


@njit(cache=True)
def _j1_over_t(t):
    if t < 1e-6:
        return 0.5 - t * t / 16.0
    return bessel_scalar(1, t) / t


@njit(cache=True)
def _psf_array(rho, sigma, out):
    scale = 1.0 / (math.pi * sigma * sigma)
    for i in range(rho.shape[0]):
        v = _j1_over_t(rho[i] / sigma)
        out[i] = scale * v * v


def airy_psf(point, center, sigma):
    """Density of a single Airy disk with spread ``sigma`` centred at ``center``.

    ``point`` may be a single 2-vector or an array of shape ``(..., 2)``.
    """
    _check_sigma(sigma)
    diff = np.asarray(point, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    rho = np.sqrt(np.sum(diff * diff, axis=-1))
    flat = np.ascontiguousarray(np.atleast_1d(rho).ravel())
    out = np.empty_like(flat)
    _psf_array(flat, float(sigma), out)
    if np.ndim(rho) == 0:
        return float(out[0])
    return out.reshape(np.shape(rho))


def otf(radius, sigma):
    """Optical transfer function of the Airy PSF at frequency magnitude ``radius``.

    ``(2/pi) * (arccos(s) - s * sqrt(1 - s^2))`` with ``s = pi * sigma * radius``,
    and exactly zero once ``s >= 1``.
    """
    _check_sigma(sigma)
    r = np.asarray(radius, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("otf radius must be nonnegative")
    s = np.clip(math.pi * sigma * r, 0.0, 1.0)
    val = (2.0 / math.pi) * (np.arccos(s) - s * np.sqrt(1.0 - s * s))
    # r = 1/(pi sigma) can round to s a few ulps below one
    val = np.where(s >= 1.0 - 4.0 * np.finfo(float).eps, 0.0, val)
    if val.ndim == 0:
        return float(val)
    return val


@dataclass(frozen=True)
class ResolutionCriteria:
    """Classical two-point resolution thresholds, in center-coordinate units."""

    abbe: float
    rayleigh: float
    sparrow: float
    houston: float
    buxton: float
    schuster: float
    dawes: float

    def as_dict(self):
        return {
            "abbe": self.abbe,
            "rayleigh": self.rayleigh,
            "sparrow": self.sparrow,
            "houston": self.houston,
            "buxton": self.buxton,
            "schuster": self.schuster,
            "dawes": self.dawes,
        }


_CRITERION_FACTORS = {
    "rayleigh": 1.22,
    "sparrow": 0.94,
    "houston": 1.03,
    "buxton": 1.46,
    "schuster": 2.44,
    "dawes": 1.02,
}


def resolution_criteria(sigma) -> ResolutionCriteria:
    _check_sigma(sigma)
    abbe = math.pi * sigma
    return ResolutionCriteria(
        abbe=abbe, **{name: f * abbe for name, f in _CRITERION_FACTORS.items()}
    )

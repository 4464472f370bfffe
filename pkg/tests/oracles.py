"""Independent numerical references used by the tests.

Everything here is built from scipy's Bessel functions and plain quadrature,
never from the package under test.
"""

import math

import numpy as np
from scipy import integrate, special


def _panels(lo, hi, width, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.arange(lo, hi + 1e-12 * width, width)
    a, b = edges[:-1], edges[1:]
    x = (0.5 * (b - a)[:, None] * nodes + 0.5 * (b + a)[:, None]).ravel()
    w = (0.5 * (b - a)[:, None] * weights).ravel()
    return x, w


def airy_density(r, sigma):
    t = np.maximum(np.asarray(r, dtype=float), 1e-300) / sigma
    v = np.where(t < 1e-8, 0.5, special.j1(t) / t)
    return v * v / (math.pi * sigma * sigma)


def hankel_otf(rho, sigma, cut=4000.0):
    """2-D Fourier transform of the Airy density at frequency magnitude ``rho``.

    Quadrature out to ``cut * sigma``; the rest uses the large-radius envelope
    ``A(r) ~ sigma / (pi^2 r^3)``, which leaves an error of order ``cut^-2``.
    """
    r, w = _panels(0.0, cut * sigma, 0.25 * sigma, 24)
    a = 2 * math.pi * rho
    body = 2 * math.pi * np.sum(w * airy_density(r, sigma) * special.j0(a * r) * r)
    big = cut * sigma
    if a == 0.0:
        tail = 2 * sigma / (math.pi * big)
    else:
        x0 = a * big
        val, _ = integrate.quad(lambda u: special.j0(u) / (u * u), x0, x0 + 4000.0, limit=4000)
        tail = 2 * sigma / math.pi * a * val
    return body + tail


def tv_two_disks(c0, c1, sigma, rmax=2000.0, per_unit=8, n_angles=1024):
    """Half the L1 distance between Airy disks at ``c0`` and ``c1`` on the x axis.

    Polar Gauss-Legendre quadrature about the midpoint.  Radii are in units of
    ``sigma / 0.3183`` so the oscillation period is resolved at any scale.
    """
    mid = 0.5 * (c0 + c1)
    unit = math.pi * sigma
    r, w = _panels(0.0, rmax * unit, 8.0 * unit / per_unit, 8)
    th = 2 * math.pi * (np.arange(n_angles) + 0.5) / n_angles
    c, s = np.cos(th), np.sin(th)
    total = 0.0
    for i in range(0, len(r), 256):
        rr = r[i:i + 256, None]
        x = mid + rr * c
        y = rr * s
        d0 = airy_density(np.hypot(x - c0, y), sigma)
        d1 = airy_density(np.hypot(x - c1, y), sigma)
        ring = np.abs(d0 - d1).sum(axis=1) * (2 * math.pi / n_angles)
        total += np.sum(ring * r[i:i + 256] * w[i:i + 256])
    return 0.5 * total

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from oracles import hankel_otf

from airy_superres.airy_core import (
    GAMMA_LOWER,
    GAMMA_UPPER,
    J0_FIRST_ZERO,
    J1_FIRST_ZERO,
    LANDAU_CONSTANT,
    airy_psf,
    bessel_j,
    otf,
    resolution_criteria,
)


def integral_bessel(n, x):
    # J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt, by Gauss-Legendre
    nodes, weights = np.polynomial.legendre.leggauss(400)
    t = 0.5 * math.pi * (nodes + 1.0)
    return 0.5 * np.sum(weights * np.cos(n * t - x * np.sin(t)))


def test_bessel_special_values():
    assert bessel_j(1, 0.0) == 0.0
    assert bessel_j(0, 0.0) == 1.0
    assert abs(bessel_j(1, 3.8317059702075125)) < 1e-12
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-12
    assert J0_FIRST_ZERO == pytest.approx(math.pi / 2 * 1.5309, abs=1e-4)
    assert J1_FIRST_ZERO == pytest.approx(3.83, abs=0.01)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_bessel_matches_scipy_on_wide_grid(order):
    x = np.concatenate([np.linspace(-30, 30, 4001), np.geomspace(30, 1e4, 3000)])
    ref = special.jv(order, x)
    assert np.max(np.abs(bessel_j(order, x) - ref)) <= 1e-12


@pytest.mark.parametrize("order", [0, 1, 2])
def test_bessel_matches_integral_representation(order):
    for x in [0.3, 2.0, 7.9, 8.1, 12.0, 24.9, 25.1, 60.0]:
        assert bessel_j(order, x) == pytest.approx(integral_bessel(order, x), abs=1e-12)


def test_bessel_parity():
    x = np.linspace(0.1, 40, 500)
    assert np.allclose(bessel_j(0, -x), bessel_j(0, x), atol=0)
    assert np.allclose(bessel_j(1, -x), -bessel_j(1, x), atol=0)
    assert np.allclose(bessel_j(2, -x), bessel_j(2, x), atol=0)


def test_bessel_recurrences_by_finite_differences():
    x = np.linspace(0.5, 80.0, 400)
    h = 1e-3

    def deriv(order):
        # fourth-order central stencil
        f = lambda s: bessel_j(order, x + s * h)
        return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h)

    d0, d1 = deriv(0), deriv(1)
    assert np.max(np.abs(d0 + bessel_j(1, x))) < 1e-10
    assert np.max(np.abs(d1 - (bessel_j(0, x) - bessel_j(1, x) / x))) < 1e-10


def test_bessel_rejects_bad_input():
    with pytest.raises(ValueError):
        bessel_j(3, 1.0)
    with pytest.raises(ValueError):
        bessel_j(0, math.inf)


def test_landau_envelope():
    r = np.geomspace(0.1, 1000.0, 10_000)
    for order in (0, 1, 2):
        assert np.all(np.abs(bessel_j(order, r)) <= LANDAU_CONSTANT * r ** (-1.0 / 3.0))


def test_psf_center_and_first_zero():
    sigma = 1 / math.pi
    assert airy_psf([0.0, 0.0], [0.0, 0.0], sigma) == pytest.approx(math.pi / 4, rel=1e-14)
    z = J1_FIRST_ZERO * sigma
    assert airy_psf([z, 0.0], [0.0, 0.0], sigma) == pytest.approx(0.0, abs=1e-20)


def test_psf_continuous_at_center():
    sigma = 0.7
    near = airy_psf([1e-7, 0.0], [0.0, 0.0], sigma)
    assert near == pytest.approx(1.0 / (4 * math.pi * sigma**2), rel=1e-12)


def test_psf_matches_scipy_formula():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 2)) * 3
    sigma = 0.4
    t = np.linalg.norm(pts - [0.2, -0.1], axis=1) / sigma
    ref = (special.j1(t) / t) ** 2 / (math.pi * sigma**2)
    assert np.allclose(airy_psf(pts, [0.2, -0.1], sigma), ref, rtol=1e-11, atol=1e-16)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 2 * math.pi), st.floats(0.0, 2 * math.pi))
def test_psf_rotational_symmetry(r, a, b):
    sigma = 0.9
    p1 = [r * math.cos(a), r * math.sin(a)]
    p2 = [r * math.cos(b), r * math.sin(b)]
    assert airy_psf(p1, [0, 0], sigma) == pytest.approx(airy_psf(p2, [0, 0], sigma), rel=1e-12, abs=1e-300)


def test_psf_integrates_to_one():
    # radial integral of 2 pi r A(r) out to a large radius, plus the known tail mass
    sigma = 1.0
    nodes, weights = np.polynomial.legendre.leggauss(20)
    edges = np.arange(0.0, 2000.0 + 1e-9, 0.5)
    lo, hi = edges[:-1], edges[1:]
    r = (0.5 * (hi - lo)[:, None] * nodes + 0.5 * (hi + lo)[:, None]).ravel()
    w = (0.5 * (hi - lo)[:, None] * weights).ravel()
    mass = np.sum(w * 2 * math.pi * r * airy_psf(np.column_stack([r, 0 * r]), [0, 0], sigma))
    tail = special.j0(2000.0) ** 2 + special.j1(2000.0) ** 2
    assert mass + tail == pytest.approx(1.0, abs=1e-9)


def test_otf_examples():
    assert otf(0.0, 0.3) == 1.0
    assert otf(1 / (math.pi * 0.3), 0.3) == 0.0
    assert otf(0.5, 1 / math.pi) == pytest.approx(2 / math.pi * (math.pi / 3 - math.sqrt(3) / 4), abs=1e-15)
    assert otf(0.5, 1 / math.pi) == pytest.approx(0.3910, abs=1e-4)
    assert otf(5.0, 1 / math.pi) == 0.0


def test_otf_rejects_negative_radius():
    with pytest.raises(ValueError):
        otf(-0.1, 1.0)
    with pytest.raises(ValueError):
        otf(0.1, 0.0)


def test_otf_lower_bound_and_monotone():
    r = np.linspace(0, 1, 5001)
    vals = otf(r, 1 / math.pi)
    assert np.all(vals >= (1 - r) ** 2 - 1e-15)
    assert np.all(np.diff(vals) <= 0)


def test_otf_matches_fourier_integral():
    rng = np.random.default_rng(11)
    sigma = 1 / math.pi
    for rho in np.concatenate([[0.0, 0.01], rng.uniform(0.0, 0.98, 5)]):
        assert otf(rho, sigma) == pytest.approx(hankel_otf(rho, sigma), abs=1e-6)


def test_resolution_criteria():
    c = resolution_criteria(1 / math.pi)
    assert c.abbe == pytest.approx(1.0)
    assert c.rayleigh == pytest.approx(1.22)
    assert resolution_criteria(2 / math.pi).schuster == pytest.approx(4.88)
    for name, factor in [("sparrow", 0.94), ("houston", 1.03), ("buxton", 1.46), ("dawes", 1.02)]:
        assert getattr(c, name) == pytest.approx(factor)


def test_separation_constants():
    assert GAMMA_UPPER == pytest.approx(1.5309, abs=1e-4)
    assert GAMMA_LOWER == pytest.approx(1.1547, abs=1e-4)
    assert LANDAU_CONSTANT == pytest.approx(0.7857, abs=1e-4)

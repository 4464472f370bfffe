import math

import numpy as np
import pytest

from airy_superres.airy_core import GAMMA_UPPER
from airy_superres.errors import CutoffViolation, MarginTooSmall, WhiteningRankDeficient
from airy_superres.numerics import least_squares, match_points
from airy_superres.otf_oracle import ExactOracle
from airy_superres.sampling import SuperpositionModel
from airy_superres.tensor_learner import (
    PROBE,
    MeasurementTensor,
    SteeringFrequencies,
    build_tensor,
    centers_from_columns,
    default_m,
    default_radii,
    empirical_kappa,
    jennrich,
    tensor_resolve,
)

SIGMA = 1 / math.pi


def exact_oracle(weights, centers, eta=0.0, seed=0):
    return ExactOracle(SuperpositionModel(weights, centers, SIGMA), eta=eta, seed=seed)


def factors(tensor, centers):
    mu = np.asarray(centers, dtype=float)
    v = np.exp(-2j * np.pi * tensor.omegas @ mu.T)
    w = np.exp(-2j * np.pi * tensor.steering.rows @ mu.T)
    return v, w


def rank_k_sum(v, w, lam):
    return np.einsum("aj,bj,ij,j->abi", v, v, w, lam)


def random_centers(rng, k, gap=0.05, radius=1 / 3):
    while True:
        r = radius * np.sqrt(rng.random(k))
        a = 2 * np.pi * rng.random(k)
        c = np.column_stack([r * np.cos(a), r * np.sin(a)])
        d = np.linalg.norm(c[:, None] - c[None], axis=-1)
        if k == 1 or d[np.triu_indices(k, 1)].min() >= gap:
            return c


def separated_centers(rng, k, sep=1.8, radius=1.05):
    # centers beyond the tensor method's separation floor, readable at the probes
    if k == 3:
        a = 2 * np.pi * rng.random()
        side = sep + 0.1 * rng.random()
        c = side / math.sqrt(3) * np.array(
            [[math.cos(a + j * 2 * np.pi / 3), math.sin(a + j * 2 * np.pi / 3)] for j in range(3)])
        return c + rng.uniform(-0.05, 0.05, size=(3, 2))
    return random_centers(rng, k, gap=sep, radius=radius)


def synthetic_tensor(rng, k, m=20, sep=1.8):
    centers = separated_centers(rng, k, sep)
    lam = rng.dirichlet(np.ones(k))
    R, r = default_radii(sep)
    rad = R * np.sqrt(rng.random(m))
    ang = 2 * np.pi * rng.random(m)
    omegas = np.vstack([np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]),
                        [[PROBE, 0.0], [0.0, PROBE], [0.0, 0.0]]])
    phi = 2 * np.pi * rng.random()
    steer = SteeringFrequencies(R=R, r=r, v=np.array([math.cos(phi), math.sin(phi)]))
    shell = MeasurementTensor(entries=np.zeros((m + 3, m + 3, 3), complex), omegas=omegas, steering=steer)
    v, w = factors(shell, centers)
    shell.entries = rank_k_sum(v, w, lam)
    return shell, v, lam, centers


def column_error(vhat, v):
    # optimal column permutation by matching columns as points in C^m
    pts_hat = np.column_stack([vhat.real.T, vhat.imag.T])
    pts = np.column_stack([v.real.T, v.imag.T])
    perm, _ = match_points(pts_hat, pts)
    return np.linalg.norm(vhat - v[:, perm]), perm


def test_default_radii_budget():
    R, r = default_radii(1.6)
    c = (1.6 + GAMMA_UPPER) / 2
    assert R == pytest.approx(GAMMA_UPPER / (2 * c))
    assert r == pytest.approx((0.5 - R) / 2)
    assert r + 2 * R < 1


def test_default_m_bounds():
    assert default_m(3, 1.6, 0.1) >= 8
    assert default_m(3, 1.0, 0.1) == 200
    assert default_m(1, 5.0, 0.5) == 8


def test_single_disk_at_origin_gives_ones():
    t = build_tensor(exact_oracle([1.0], [[0.0, 0.0]]), 1, 2.0, m=6)
    assert np.allclose(t.entries, 1.0, atol=1e-14)
    assert t.m_prime == 9
    assert np.array_equal(t.omegas[-3:], [[PROBE, 0], [0, PROBE], [0, 0]])


def test_single_shifted_disk_forward_formula():
    mu = np.array([0.1, 0.0])
    t = build_tensor(exact_oracle([1.0], [mu]), 1, 2.0, m=5, seed=3)
    xi = t.omegas[:, None, None] + t.omegas[None, :, None] + t.steering.rows[None, None]
    assert np.allclose(t.entries, np.exp(-2j * np.pi * xi @ mu), atol=1e-13)
    flat = t.entries.reshape(t.m_prime, -1)
    s = np.linalg.svd(flat, compute_uv=False)
    assert s[1] <= 1e-12 * s[0]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_tensor_equals_rank_k_sum(k):
    rng = np.random.default_rng(k)
    centers = random_centers(rng, k)
    lam = rng.dirichlet(np.ones(k))
    t = build_tensor(exact_oracle(lam, centers), k, 2.0, m=10, seed=k)
    v, w = factors(t, centers)
    assert np.max(np.abs(t.entries - rank_k_sum(v, w, lam))) <= 1e-12


def test_build_tensor_cutoff_and_frame_checks():
    oracle = exact_oracle([1.0], [[0.0, 0.0]])
    with pytest.raises(CutoffViolation):
        build_tensor(oracle, 1, 2.0, R=0.45, r=0.1)
    bad = ExactOracle(SuperpositionModel([1.0], [[0.0, 0.0]], 0.5))
    with pytest.raises(ValueError):
        build_tensor(bad, 1, 2.0)


def test_jennrich_rank_one_correlation():
    t = build_tensor(exact_oracle([1.0], [[0.12, -0.2]]), 1, 2.0, m=8, seed=1)
    vhat = jennrich(t, 1)
    v, _ = factors(t, [[0.12, -0.2]])
    corr = abs(np.vdot(vhat[:, 0], v[:, 0])) / (np.linalg.norm(vhat) * np.linalg.norm(v))
    assert corr >= 1 - 1e-10


@pytest.mark.parametrize("seed", range(100))
def test_jennrich_noiseless_three_columns(seed):
    t, v, _, _ = synthetic_tensor(np.random.default_rng(seed), 3)
    vhat = jennrich(t, 3)
    err, _ = column_error(vhat, v)
    assert err <= 1e-8
    assert np.array_equal(vhat[t.reference_row], np.ones(3))


def test_jennrich_noise_envelope():
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        t, v, _, _ = synthetic_tensor(rng, 2)
        noise = rng.normal(size=t.entries.shape) + 1j * rng.normal(size=t.entries.shape)
        t.entries = t.entries + 1e-8 * noise / np.abs(noise)
        errs.append(column_error(jennrich(t, 2), v)[0])
    assert max(errs) <= 1e-5


def test_jennrich_rank_deficiency_and_bad_k():
    t = build_tensor(exact_oracle([1.0], [[0.0, 0.0]]), 1, 2.0, m=6)
    with pytest.raises(WhiteningRankDeficient):
        jennrich(t, 2)
    with pytest.raises(ValueError):
        jennrich(t, 0)


def test_probe_readout_under_perturbation():
    rng = np.random.default_rng(7)
    t, v, _, centers = synthetic_tensor(rng, 3)
    for eps in (1e-6, 1e-4, 1e-2):
        pert = rng.normal(size=v.shape) + 1j * rng.normal(size=v.shape)
        vhat = v + eps * pert / np.linalg.norm(pert)
        got = centers_from_columns(vhat, t.probe_rows, t.probe)
        assert np.max(np.abs(got - centers)) <= eps


def test_weight_recovery_bound_shape():
    rng = np.random.default_rng(8)
    t, v, lam, _ = synthetic_tensor(rng, 2)
    smin = np.linalg.svd(v, compute_uv=False)[-1]
    b = v @ lam
    for eps in (1e-6, 1e-4, 1e-3):
        dv = rng.normal(size=v.shape) + 1j * rng.normal(size=v.shape)
        db = rng.normal(size=b.shape) + 1j * rng.normal(size=b.shape)
        vhat = v + eps * dv / np.linalg.norm(dv)
        bhat = b + eps * db / np.linalg.norm(db)
        err = np.linalg.norm(least_squares(vhat, bhat) - lam)
        assert err <= (2 * eps * np.linalg.norm(lam) + 2 * eps) / (smin - eps)


def test_resolve_single_disk_noiseless():
    model = SuperpositionModel([1.0], [[0.2, -0.1]], SIGMA)
    est = tensor_resolve(model, 1, 2.0)
    assert np.allclose(est.centers, [[0.2, -0.1]], atol=1e-6)
    assert est.weights[0] == pytest.approx(1.0, abs=1e-6)
    assert est.meta["method"] == "tensor"


def test_resolve_three_disks_noiseless():
    side = 1.6
    centers = side / math.sqrt(3) * np.array(
        [[math.cos(a), math.sin(a)] for a in (0.3, 0.3 + 2 * math.pi / 3, 0.3 + 4 * math.pi / 3)])
    model = SuperpositionModel([0.2, 0.3, 0.5], centers, SIGMA)
    est = tensor_resolve(model, 3, side, m=30, seed=2)
    perm, dist = match_points(est.centers, centers)
    assert dist <= 1e-6
    assert np.allclose(est.weights, model.weights[perm], atol=1e-6)


def test_resolve_in_other_units():
    sigma = 0.5
    centers = np.array([[-1.5, 0.0], [1.5, 0.2]])
    model = SuperpositionModel([0.4, 0.6], centers, sigma)
    est = tensor_resolve(model, 2, 3.0, m=20)
    perm, dist = match_points(est.centers, centers)
    assert dist <= 1e-6


def test_margin_too_small():
    model = SuperpositionModel([0.5, 0.5], [[-0.25, 0], [0.25, 0]], SIGMA)
    with pytest.raises(MarginTooSmall):
        tensor_resolve(model, 2, 0.5)
    with pytest.raises(MarginTooSmall):
        tensor_resolve(model, 2, GAMMA_UPPER + 5e-4)


def test_empirical_kappa_examples():
    assert empirical_kappa([[0.3, 0.1]], 20, 0.3) == pytest.approx(1.0)
    assert empirical_kappa([[0.3, 0.1], [0.3, 0.1]], 20, 0.3) > 1e6


def test_empirical_kappa_decreases_with_separation():
    # one frequency disk, valid for every separation in the sweep
    R, _ = default_radii(1.6)
    medians = []
    for sep in (1.6, 2.0, 3.0):
        kap = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = 2 * np.pi * rng.random()
            tri = sep / math.sqrt(3) * np.array(
                [[math.cos(a + j * 2 * math.pi / 3), math.sin(a + j * 2 * math.pi / 3)] for j in range(3)])
            kap.append(empirical_kappa(tri, 200, R, seed=seed))
        medians.append(np.median(kap))
    assert medians[0] > medians[1] > medians[2]

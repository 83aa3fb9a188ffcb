import math

import numpy as np
import pytest

from dyadwave.decaymat import inverse_sqrt, spectral_inverse_sqrt
from dyadwave.errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    RankDeficiency,
    ZeroBallMass,
)
from dyadwave.nets import build_nets
from dyadwave.randgrid import grid_labels, reference_order
from dyadwave.space import build_space, exponent_a, gen_example
from dyadwave.spline import compute_splines
from dyadwave.wavelet import (
    MRA,
    build_mra,
    build_wavelet_basis,
    dual_splines,
    gram_decay_certificates,
    gram_matrix,
    inverse_transform,
    orthonormalize,
    pre_wavelets,
    prewavelet_gram,
    project_Vk,
    verify_wavelet_theorem,
    wavelet_transform,
)

FLEET = [
    ("cyclic", {"n": 16}),
    ("interval", {"n": 64}),
    ("binary_tree", {"depth": 4}),
    ("point_cloud", {"n": 40, "dim": 2}),
    ("koranyi_sphere", {"n": 30, "dim": 2}),
    ("snowflake", {"n": 32, "eps": 0.5}),
]


def setup(kind, params, delta=0.5, seed=1):
    space = gen_example(kind, seed=seed, **params)
    nets = build_nets(space, delta)
    ref = reference_order(space, nets)
    labels = grid_labels(space, nets, ref)
    system = compute_splines(space, nets, ref, labels)
    return space, nets, system


def assemble(kind, params, delta=0.5, seed=1):
    space, nets, system = setup(kind, params, delta=delta, seed=seed)
    mra = build_mra(space, system)
    basis = build_wavelet_basis(space, nets, mra)
    return space, nets, system, mra, basis


def mu_dot(space, f, g):
    return float(np.sum(space.weights * f * g))


def test_gram_finest_level_diagonal():
    space, nets, system = setup("cyclic", {"n": 8})
    M = gram_matrix(space, system, nets.k_max)
    expect = np.diag(space.weights[system.values[nets.k_max].argmax(axis=1)]
                     / system.ball_mass[nets.k_max])
    assert np.allclose(M, expect, atol=1e-14)
    assert np.allclose(M, np.eye(8), atol=1e-14)


def test_gram_coarsest_level_scalar():
    space, nets, system = setup("interval", {"n": 16})
    M = gram_matrix(space, system, nets.k_min)
    assert M.shape == (1, 1)
    assert math.isclose(M[0, 0],
                        space.total_mass / system.ball_mass[nets.k_min][0],
                        rel_tol=1e-12)


@pytest.mark.parametrize("kind,params", FLEET)
def test_gram_spd_and_riesz_bounds(kind, params):
    space, nets, system = setup(kind, params)
    mra = build_mra(space, system)
    for k in nets.level_range:
        M = mra.gram[k]
        assert np.allclose(M, M.T, atol=1e-14)
        lmin, lmax = mra.riesz[k]
        vals = np.linalg.eigvalsh(M)
        assert lmin > 0.0
        assert math.isclose(lmin, vals[0], rel_tol=1e-10, abs_tol=1e-12)
        assert math.isclose(lmax, vals[-1], rel_tol=1e-10, abs_tol=1e-12)


@pytest.mark.parametrize("kind,params", FLEET)
def test_dual_biorthogonality(kind, params):
    space, nets, system = setup(kind, params)
    mra = build_mra(space, system)
    for k in nets.level_range:
        S = system.values[k]
        pair = (S * space.weights) @ mra.duals[k].T
        assert np.abs(pair - np.eye(S.shape[0])).max() <= 1e-10


def test_dual_midlevel_interval32():
    space, nets, system = setup("interval", {"n": 32})
    k = (nets.k_min + nets.k_max) // 2
    D = dual_splines(space, system, k)
    S = system.values[k]
    pair = (S * space.weights) @ D.T
    assert np.abs(pair - np.eye(S.shape[0])).max() <= 1e-10


def test_dual_finest_rescaled_indicators():
    space, nets, system = setup("point_cloud", {"n": 12, "dim": 2})
    D = dual_splines(space, system, nets.k_max)
    expect = system.values[nets.k_max] / space.weights[None, :]
    assert np.allclose(D, expect, atol=1e-12)


def test_projection_fixes_range_kills_complement():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 16})
    rng = np.random.default_rng(5)
    for k in basis.levels:
        f = rng.standard_normal(len(nets.levels[k])) @ system.values[k]
        assert np.abs(project_Vk(space, mra, k, f) - f).max() <= 1e-10
        psi = basis.wavelets[k][0]
        assert np.abs(project_Vk(space, mra, k, psi)).max() <= 1e-10


def test_projection_contraction_idempotent_selfadjoint():
    space, nets, system = setup("koranyi_sphere", {"n": 20, "dim": 2})
    mra = build_mra(space, system)
    rng = np.random.default_rng(7)
    f = rng.standard_normal(space.n)
    g = rng.standard_normal(space.n)
    for k in nets.level_range:
        pf = project_Vk(space, mra, k, f)
        assert mu_dot(space, pf, pf) <= mu_dot(space, f, f) + 1e-12
        assert np.abs(project_Vk(space, mra, k, pf) - pf).max() <= 1e-10
        lhs = mu_dot(space, pf, g)
        rhs = mu_dot(space, f, project_Vk(space, mra, k, g))
        assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-10)


@pytest.mark.parametrize("kind,params", FLEET)
def test_projector_nesting(kind, params):
    space, nets, system = setup(kind, params)
    mra = build_mra(space, system)
    for k in range(nets.k_min, nets.k_max):
        coarse, fine = mra.proj[k], mra.proj[k + 1]
        assert np.abs(coarse @ fine - coarse).max() <= 1e-10
        assert np.abs(fine @ coarse - coarse).max() <= 1e-10


def test_projector_endpoints():
    space, nets, system = setup("interval", {"n": 32})
    mra = build_mra(space, system)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(space.n)
    mean = mu_dot(space, f, np.ones(space.n)) / space.total_mass
    coarse = project_Vk(space, mra, nets.k_min, f)
    assert np.abs(coarse - mean).max() <= 1e-12
    assert np.abs(mra.proj[nets.k_max] - np.eye(space.n)).max() <= 1e-10


@pytest.mark.parametrize("kind,params", FLEET)
def test_prewavelets_orthogonal_to_coarse_space(kind, params):
    space, nets, system = setup(kind, params)
    mra = build_mra(space, system)
    for k in range(nets.k_min, nets.k_max):
        if len(nets.ydiff[k]) == 0:
            continue
        base = pre_wavelets(space, nets, mra, k)
        S = system.values[k]
        assert np.abs((S * space.weights) @ base.T).max() <= 1e-10
        assert np.linalg.matrix_rank(base) == len(nets.ydiff[k])


def test_two_point_closed_form():
    space, nets, system, mra, basis = assemble("interval", {"n": 2})
    assert basis.count() == 1
    (k,) = basis.levels
    center = int(basis.index_sets[k][0])
    base = pre_wavelets(space, nets, mra, k)
    assert np.allclose(np.abs(base[0]), [0.5, 0.5], atol=1e-12)
    assert math.isclose(base[0] @ space.weights, 0.0, abs_tol=1e-12)
    assert np.allclose(basis.mgram[k], [[0.5]], atol=1e-12)
    psi = basis.wavelets[k][0]
    root = 1.0 / math.sqrt(2.0)
    assert psi[center] > 0
    assert np.allclose(np.sort(psi), [-root, root], atol=1e-12)
    assert np.allclose(basis.constant, [root, root], atol=1e-12)


def test_single_point_space_basis():
    space = build_space(np.zeros((1, 1)), np.full(1, 2.0))
    nets = build_nets(space, 0.5)
    ref = reference_order(space, nets)
    labels = grid_labels(space, nets, ref)
    system = compute_splines(space, nets, ref, labels)
    mra = build_mra(space, system)
    basis = build_wavelet_basis(space, nets, mra)
    assert basis.levels == [] and basis.count() == 0
    assert np.allclose(basis.stacked(), [[1.0 / math.sqrt(2.0)]])
    rep = verify_wavelet_theorem(space, nets, basis)
    assert rep["ok"] and rep["count"] == 0


def test_orthonormalize_single_vector():
    space, _, _ = setup("cyclic", {"n": 8})
    rng = np.random.default_rng(11)
    v = rng.standard_normal((1, 8))
    psi, mg = orthonormalize(space, v, np.array([3.0]))
    norm = math.sqrt(mu_dot(space, v[0], v[0]))
    assert np.allclose(np.abs(psi[0]), np.abs(v[0]) / norm, atol=1e-12)
    assert mg.shape == (1, 1)


def test_orthonormalize_fixes_already_orthonormal():
    space, _, _ = setup("cyclic", {"n": 8})
    rng = np.random.default_rng(13)
    raw = rng.standard_normal((3, 8))
    ortho = []
    for row in raw:
        for prev in ortho:
            row = row - mu_dot(space, row, prev) * prev
        ortho.append(row / math.sqrt(mu_dot(space, row, row)))
    ortho = np.array(ortho)
    psi, mg = orthonormalize(space, ortho, np.ones(3))
    assert np.abs(mg - np.eye(3)).max() <= 1e-12
    assert np.abs(np.abs(psi) - np.abs(ortho)).max() <= 1e-10


def test_orthonormalize_empty_family():
    space, _, _ = setup("cyclic", {"n": 8})
    psi, mg = orthonormalize(space, np.zeros((0, 8)), np.zeros(0))
    assert psi.shape == (0, 8) and mg.shape == (0, 0)


def test_cyclic16_full_gram_identity():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 16})
    B = basis.stacked()
    gram = (B * space.weights) @ B.T
    assert np.abs(gram - np.eye(16)).max() <= 1e-10


def test_sign_convention_center_nonnegative():
    for kind, params in FLEET:
        space, nets, system, mra, basis = assemble(kind, params)
        for k in basis.levels:
            centers = basis.index_sets[k]
            vals = basis.wavelets[k][np.arange(len(centers)), centers]
            assert (vals >= 0.0).all()


@pytest.mark.parametrize("kind,params", FLEET)
def test_verify_theorem_fleet(kind, params):
    space, nets, system, mra, basis = assemble(kind, params)
    rep = verify_wavelet_theorem(space, nets, basis)
    assert rep["ok"]
    assert rep["count"] == space.n - 1
    assert rep["gram_dev"] <= 1e-10
    assert rep["mean_dev"] <= 1e-10
    assert rep["recon_dev"] <= 1e-10
    assert rep["a"] == exponent_a(space)
    assert not rep["decay"]["refuted"]
    assert rep["decay"]["c"] > 0.0
    assert rep["holder"]["eta_hat"] > 0.0


def test_verify_theorem_live_delta():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 16}, delta=0.2)
    rep = verify_wavelet_theorem(space, nets, basis)
    assert rep["ok"]
    assert rep["decay"]["c"] > 0.0
    assert rep["holder"]["eta_hat"] > 0.0


def test_metric_space_uses_unit_exponent():
    space, nets, system, mra, basis = assemble("interval", {"n": 16})
    assert space.lipschitz
    rep = verify_wavelet_theorem(space, nets, basis)
    assert rep["a"] == 1.0


def test_mgram_series_root_matches_spectral():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 16}, delta=0.2)
    checked = 0
    for k in basis.levels:
        M = basis.mgram[k]
        if M.shape[0] < 2:
            continue
        series = inverse_sqrt(M)["root"]
        oracle = spectral_inverse_sqrt(M)
        assert np.abs(series - oracle).max() <= 1e-8
        checked += 1
    assert checked > 0


def test_transform_roundtrip_and_parseval():
    space, nets, system, mra, basis = assemble("interval", {"n": 64})
    rng = np.random.default_rng(17)
    for _ in range(20):
        f = rng.standard_normal(64)
        coeffs = wavelet_transform(space, basis, f)
        back = inverse_transform(basis, coeffs)
        assert np.abs(back - f).max() <= 1e-10
        assert math.isclose(float(coeffs @ coeffs), mu_dot(space, f, f),
                            rel_tol=1e-10)


def test_transform_of_basis_vectors():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 16})
    coeffs = wavelet_transform(space, basis, basis.wavelets[basis.levels[0]][0])
    expect = np.zeros(16)
    expect[1] = 1.0
    assert np.abs(coeffs - expect).max() <= 1e-10
    coeffs = wavelet_transform(space, basis, np.full(16, 3.0))
    assert abs(coeffs[0] - 3.0 * math.sqrt(space.total_mass)) <= 1e-10
    assert np.abs(coeffs[1:]).max() <= 1e-10


def test_transform_dimension_errors():
    space, nets, system, mra, basis = assemble("cyclic", {"n": 8})
    with pytest.raises(DimensionMismatch):
        wavelet_transform(space, basis, np.ones(7))
    with pytest.raises(DimensionMismatch):
        inverse_transform(basis, np.ones(9))
    with pytest.raises(DimensionMismatch):
        project_Vk(space, mra, nets.k_min, np.ones(9))


def test_labels_match_stacked_rows():
    space, nets, system, mra, basis = assemble("interval", {"n": 16})
    info = basis.labels()
    assert len(info) == basis.stacked().shape[0]
    assert info[0] == (None, -1)
    flat = [(k, int(p)) for k in basis.levels for p in basis.index_sets[k]]
    assert info[1:] == flat


def test_measure_rescaling_shrinks_wavelets():
    space, nets, system, mra, basis = assemble("point_cloud",
                                               {"n": 24, "dim": 2})
    doubled = build_space(space.dist, 2.0 * space.weights, coords=space.coords)
    nets2 = build_nets(doubled, 0.5)
    ref2 = reference_order(doubled, nets2)
    labels2 = grid_labels(doubled, nets2, ref2)
    system2 = compute_splines(doubled, nets2, ref2, labels2)
    basis2 = build_wavelet_basis(doubled, nets2, build_mra(doubled, system2))
    lhs = basis2.stacked()
    rhs = basis.stacked() / math.sqrt(2.0)
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_rank_deficiency_guard():
    space, nets, system = setup("cyclic", {"n": 8})
    mra = build_mra(space, system)
    k = next(k for k in range(nets.k_min, nets.k_max)
             if len(nets.ydiff[k]) > 0)
    mra.proj[k] = np.eye(space.n)
    with pytest.raises(RankDeficiency):
        pre_wavelets(space, nets, mra, k)


def test_zero_ball_mass_guard():
    space, nets, system = setup("cyclic", {"n": 8})
    system.ball_mass[nets.k_max] = np.zeros(8)
    with pytest.raises(ZeroBallMass):
        gram_matrix(space, system, nets.k_max)
    with pytest.raises(ZeroBallMass):
        prewavelet_gram(space, np.ones((2, 8)), np.zeros(2))


def test_indefinite_prewavelet_gram_rejected():
    space, _, _ = setup("cyclic", {"n": 8})
    dup = np.ones((2, 8))
    with pytest.raises(NotPositiveDefinite):
        orthonormalize(space, dup, np.ones(2))


@pytest.mark.parametrize("delta", [0.5, 0.2])
def test_gram_decay_certificates_positive(delta):
    space, nets, system, mra, basis = assemble("cyclic", {"n": 32},
                                               delta=delta)
    certs = gram_decay_certificates(space, nets, mra, basis=basis)
    for k, cert in certs["spline"].items():
        assert not cert["refuted"]
        assert cert["c"] > 0.0
    assert len(certs["prewavelet"]) == len(basis.levels)
    for cert in certs["prewavelet"].values():
        assert not cert["refuted"]
        assert cert["c"] > 0.0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divspde import noise as nz
from divspde.grid import Grid, resolvent_smoother

G1 = Grid((1.0,), (32,))
G2 = Grid((1.0, 2.0), (6, 8))


def test_defaults():
    assert nz.default_modes(G1) == 16
    assert nz.default_modes(Grid((1.0,), (5,))) == 5
    assert nz.default_m(1) == 1 and nz.default_m(2) == 2
    with pytest.raises(ValueError):
        nz.WienerConfig(G1, modes=33)


@pytest.mark.parametrize("grid", [G1, G2], ids=str)
def test_basis_orthonormal_and_sorted(grid):
    w = nz.WienerConfig(grid, modes=min(grid.size, 20))
    E = w.basis.reshape(w.modes, -1)
    gram = E @ E.T * grid.cell_volume
    np.testing.assert_allclose(gram, np.eye(w.modes), atol=1e-10)
    assert np.all(np.diff(w.eigenvalues) >= 0)
    # each basis function is an eigenvector of the discrete Laplacian
    for e, mu in zip(w.basis, w.eigenvalues):
        np.testing.assert_allclose(-grid.laplacian(e), mu * e, atol=1e-8 * mu)


def test_increment_statistics():
    w = nz.WienerConfig(G1, modes=10, seed=7)
    tau = 0.01
    x = nz.sample_increments(w, 1000, tau, paths=10).increments.ravel()
    assert x.size == 10**5
    assert 0.98 * tau <= np.var(x) <= 1.02 * tau
    s = x / np.sqrt(tau)
    assert abs(np.corrcoef(s[:-1], s[1:])[0, 1]) <= 0.01


def test_increments_deterministic_and_chunk_free():
    w = nz.WienerConfig(G1, seed=123)
    a = nz.sample_increments(w, 50, 0.1, paths=6)
    b = nz.sample_increments(w, 50, 0.1, paths=6)
    np.testing.assert_array_equal(a.increments, b.increments)
    c = nz.sample_increments(w, 50, 0.1, paths=2, first_path=4)
    np.testing.assert_array_equal(a.increments[4:], c.increments)
    assert c.path_ids == (4, 5)
    other = nz.sample_increments(nz.WienerConfig(G1, seed=124), 50, 0.1, paths=6)
    assert not np.array_equal(a.increments, other.increments)
    with pytest.raises(ValueError):
        nz.sample_increments(w, 0, 0.1)
    with pytest.raises(ValueError):
        nz.sample_increments(w, 3, 0.0)


def test_coarsen_and_select():
    w = nz.WienerConfig(G1, modes=3)
    fine = nz.sample_increments(w, 8, 0.25, paths=2)
    coarse = fine.coarsen(4)
    assert coarse.tau == 1.0 and coarse.steps == 2
    np.testing.assert_allclose(coarse.increments[:, 0], fine.increments[:, :4].sum(axis=1))
    with pytest.raises(ValueError):
        fine.coarsen(3)
    one = fine.select(1)
    assert one.paths == 1 and one.path_ids == (1,)


def test_dump_roundtrip(tmp_path):
    w = nz.WienerConfig(G1, modes=4, seed=5)
    a = nz.sample_increments(w, 7, 0.5, paths=3, first_path=2)
    a.dump(tmp_path / "n.bin")
    b = nz.NoisePath.load(tmp_path / "n.bin")
    np.testing.assert_array_equal(a.increments, b.increments)
    assert (b.tau, b.seed, b.path_ids) == (0.5, 5, (2, 3, 4))
    with open(tmp_path / "n.bin", "rb") as fh:
        fh.readline()
        assert len(fh.read()) == 3 * 7 * 4 * 8


def test_apply_diffusion_examples():
    w = nz.WienerConfig(G1, modes=5)
    q = np.array([1.0, 0, 0, 0, 0])
    B = nz.additive(w, weights=q)
    assert not np.any(nz.apply_diffusion(B, 0.0, None, np.zeros(5)))
    d = np.array([0.3, 0, 0, 0, 0])
    np.testing.assert_allclose(nz.apply_diffusion(B, 0.0, None, d), 0.3 * w.basis[0])
    # sigma == 1 multiplicative equals additive
    M = nz.multiplicative(w, "affine", L_B=0.0, sigma0=1.0, weights=np.arange(1.0, 6.0))
    A = nz.additive(w, weights=np.arange(1.0, 6.0))
    dw = np.random.default_rng(0).normal(size=(4, 5))
    u = np.random.default_rng(1).normal(size=(4,) + G1.shape)
    np.testing.assert_allclose(nz.apply_diffusion(M, 0.0, u, dw), nz.apply_diffusion(A, 0.0, u, dw), atol=1e-14)


def test_time_profile():
    w = nz.WienerConfig(G1, modes=2)
    B = nz.additive(w, weights=[1.0, 0.0], time_profile="exp_decay")
    assert nz.hs_norm_sq(B, 1.0) == pytest.approx(np.exp(-2.0))


def test_hs_norm_examples():
    w = nz.WienerConfig(G1, modes=4)
    assert nz.hs_norm_sq(nz.additive(w, weights=np.zeros(4)), 0.0) == 0
    assert nz.hs_norm_sq(nz.additive(w, weights=[2.0, 0, 0, 0]), 0.0) == pytest.approx(4.0, abs=1e-12)
    B = nz.multiplicative(w, "tanh", L_B=0.7, sigma0=0.1, weights=[1.0, 0.5, 0.2, 0.1])
    u = np.random.default_rng(2).normal(size=G1.shape)
    comps = nz.components(B, 0.0, u)
    brute = sum(G1.inner(c, c) for c in comps)
    assert nz.hs_norm_sq(B, 0.0, u) == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("grid", [G1, G2], ids=str)
def test_hs_ideal_property(grid):
    w = nz.WienerConfig(grid, modes=8)
    B = nz.multiplicative(w, "tanh", L_B=1.0, sigma0=0.2)
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = rng.normal(size=grid.shape)
        comps = nz.components(B, 0.0, u)
        smoothed = resolvent_smoother(grid, comps, 0.05, 2)
        lhs = sum(grid.inner(c, c) for c in smoothed)
        assert lhs <= nz.hs_norm_sq(B, 0.0, u) * (1 + 1e-10)


@pytest.mark.parametrize("grid", [G1, G2], ids=str)
@pytest.mark.parametrize("kind", ["additive", "multiplicative"])
def test_mollify_contraction_and_limit(grid, kind):
    w = nz.WienerConfig(grid, modes=8)
    B = nz.additive(w) if kind == "additive" else nz.multiplicative(w, "clipped", L_B=1.0, sigma0=0.5)
    u = np.random.default_rng(4).normal(size=grid.shape)
    assert nz.hs_norm_sq(nz.mollify(B, 0.1), 0.0, u) <= nz.hs_norm_sq(B, 0.0, u) + 1e-12
    d = [nz.hs_distance_sq(nz.mollify(B, 2.0**-j), B, 0.0, u, u) for j in range(1, 30)]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert d[-1] < 1e-4 * nz.hs_norm_sq(B, 0.0, u)


def test_mollify_matches_componentwise_smoother():
    w = nz.WienerConfig(G2, modes=6)
    B = nz.multiplicative(w, "tanh", L_B=1.0, sigma0=0.3)
    Be = nz.mollify(B, 0.02)
    assert Be.m == 2
    u = np.random.default_rng(5).normal(size=G2.shape)
    ref = resolvent_smoother(G2, nz.components(B, 0.0, u), 0.02, 2, method="cg")
    np.testing.assert_allclose(nz.components(Be, 0.0, u), ref, atol=1e-10)
    dw = np.random.default_rng(6).normal(size=6)
    np.testing.assert_allclose(nz.apply_diffusion(Be, 0.0, u, dw), np.tensordot(dw, ref, axes=1), atol=1e-10)
    zero = nz.mollify(nz.additive(w, weights=np.zeros(6)), 0.1)
    assert nz.hs_norm_sq(zero, 0.0) == 0
    with pytest.raises(ValueError):
        nz.mollify(B, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(nz.SIGMA_KINDS)), st.floats(0.05, 3.0), st.integers(0, 2**32 - 1))
def test_hs_lipschitz_bound(kind, L_B, seed):
    w = nz.WienerConfig(G2, modes=12)
    B = nz.multiplicative(w, kind, L_B=L_B, sigma0=0.1)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(scale=2.0, size=(2,) + G2.shape)
    ratio = np.sqrt(nz.hs_distance_sq(B, B, 0.0, u, v)) / G2.norm(u - v)
    assert ratio <= nz.hs_lipschitz_constant(B) + 1e-8


def test_c_basis_value():
    w = nz.WienerConfig(G1, modes=3)
    B = nz.additive(w, weights=[1.0, 0.5, 0.25])
    expected = np.sqrt(np.sum(np.array([1.0, 0.25, 0.0625]) * np.max(np.abs(w.basis), axis=1) ** 2))
    assert nz.c_basis(B) == pytest.approx(expected)
    # sup of sqrt(2/L) sin is at most sqrt(2)
    assert np.all(w.sup_norms <= np.sqrt(2.0) + 1e-12)


def test_isometry_zero_operator():
    w = nz.WienerConfig(G1, modes=3)
    r = nz.ito_isometry_check(nz.additive(w, weights=np.zeros(3)), w, 100, 5, 0.1)
    assert (r.lhs, r.rhs, r.rel_err) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        nz.ito_isometry_check(nz.additive(w), w, 50, 5, 0.1)


def test_isometry_multiplicative_small():
    w = nz.WienerConfig(G1, modes=4, seed=3)
    B = nz.multiplicative(w, "tanh", L_B=1.0, sigma0=0.2)
    u = np.sin(np.pi * G1.coords()[0])
    r = nz.ito_isometry_check(B, w, 4000, 10, 0.05, u=u)
    assert r.rel_err < 0.08


def test_isometry_error_shrinks_with_paths():
    # batch-averaged relative error: four times the paths roughly halves it
    w = nz.WienerConfig(Grid((1.0,), (8,)), modes=1)
    B = nz.additive(w, weights=[1.0])
    small = np.mean([nz.ito_isometry_check(B, w, 200, 4, 0.25, first_path=200 * i).rel_err for i in range(40)])
    big = np.mean([nz.ito_isometry_check(B, w, 800, 4, 0.25, first_path=10**6 + 800 * i).rel_err
                   for i in range(40)])
    assert 0.3 < big / small < 0.75

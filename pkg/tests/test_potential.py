import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq, minimize_scalar

from divspde.errors import NonConvergence
from divspde.potential import (BUILTIN_SPECS, Potential, RegularizedPotential, check_potential,
                               conjugate, fenchel_young_gap, make_potential, moreau,
                               pluto_identity_residual, pluto_terms, register_potential,
                               registered_kinds, resolvent, strip_closed_forms, truncate, yosida,
                               yosida_jacobian)

# root of s + 0.5 sinh(s) = 1 (brentq, xtol 1e-15)
COSH_S = 0.6510103531769034


@pytest.fixture
def quad():
    return make_potential({"kind": "p_power", "p": 2.0}, 2)


@pytest.fixture
def cosh2():
    return make_potential({"kind": "cosh"}, 2)


def finite(lo, hi):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


def points(dim, lo=-3.0, hi=3.0):
    return st.lists(finite(lo, hi), min_size=dim, max_size=dim).map(np.array)


# -- worked examples ----------------------------------------------------------


def test_quadratic_examples(quad):
    x = np.array([2.0, 0.0])
    np.testing.assert_allclose(resolvent(quad, 1.0, x), [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(yosida(quad, 1.0, x), [1.0, 0.0], atol=1e-14)
    assert moreau(quad, 1.0, x) == pytest.approx(1.0, abs=1e-14)
    assert conjugate(quad, np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-14)
    assert fenchel_young_gap(quad, np.array([1.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-14)
    assert fenchel_young_gap(quad, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0, abs=1e-14)
    assert abs(pluto_identity_residual(quad, 1.0, x)) <= 1e-12


def test_cosh_frozen_oracle_values(cosh2):
    s = brentq(lambda s: s + 0.5 * np.sinh(s) - 1.0, 0.0, 1.0, xtol=1e-15)
    assert s == pytest.approx(COSH_S, abs=1e-14)
    x = np.array([1.0, 0.0])
    np.testing.assert_allclose(resolvent(cosh2, 0.5, x), [COSH_S, 0.0], atol=1e-12)
    np.testing.assert_allclose(yosida(cosh2, 0.5, x), [(1 - COSH_S) / 0.5, 0.0], atol=1e-11)
    assert yosida(cosh2, 0.5, x)[0] == pytest.approx(0.6979792936461933, abs=1e-11)
    assert moreau(cosh2, 0.5, x) == pytest.approx(np.cosh(COSH_S) - 1 + (1 - COSH_S) ** 2, abs=1e-12)
    assert abs(pluto_identity_residual(cosh2, 0.5, x)) <= 1e-8


def test_cosh_conjugate_closed_form_and_grid_max(cosh2):
    y = np.array([2.0, 0.0])
    expected = 2 * np.arcsinh(2.0) - np.sqrt(5.0) + 1
    assert expected == pytest.approx(1.651202972857831, abs=1e-14)
    for method in ("auto", "scalar", "newton"):
        assert conjugate(cosh2, y, method=method) == pytest.approx(expected, rel=1e-9)
    r = np.linspace(0, 4, 400001)
    grid_max = np.max(2.0 * r - (np.cosh(r) - 1))
    assert grid_max == pytest.approx(expected, abs=1e-9)


def test_cosh_fenchel_young_equality(cosh2):
    y = np.array([1.0, 0.0])
    assert abs(fenchel_young_gap(cosh2, y, cosh2.gamma(y))) <= 1e-10


@pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: str(s))
def test_zero_is_fixed(spec):
    p = make_potential(spec, 2)
    z = np.zeros(2)
    for lam in (1.0, 0.1):
        np.testing.assert_array_equal(resolvent(p, lam, z), z)
        np.testing.assert_array_equal(yosida(p, lam, z), z)
        assert moreau(p, lam, z) == 0
        assert pluto_identity_residual(p, lam, z) == 0
    assert conjugate(p, z) == 0


def test_truncate_examples():
    np.testing.assert_allclose(truncate(1.0, np.array([3.0, 4.0])), [0.6, 0.8])
    np.testing.assert_array_equal(truncate(10.0, np.array([3.0, 4.0])), [3.0, 4.0])
    np.testing.assert_array_equal(truncate(1.0, np.zeros(2)), [0.0, 0.0])
    with pytest.raises(ValueError):
        truncate(0.0, np.ones(2))


@given(points(3, -50, 50), finite(0.1, 20))
def test_truncate_properties(x, R):
    t = truncate(R, x)
    assert np.linalg.norm(t) <= R * (1 + 1e-12)
    assert np.linalg.norm(t - x) <= 2 * np.linalg.norm(x) + 1e-12


# -- properties over the built-in library ---------------------------------------


@pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: str(s))
def test_structural_assumptions(spec):
    p = make_potential(spec, 2)
    x = np.random.default_rng(0).normal(scale=1.5, size=(500, 2))
    assert all(v == 0 for v in check_potential(p, x).values())


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2), points(2))
def test_gamma_monotone(spec, x, y):
    p = make_potential(spec, 2)
    m = np.dot(p.gamma(x) - p.gamma(y), x - y)
    assert m >= -1e-12 * (1 + np.linalg.norm(x) + np.linalg.norm(y)) ** 2


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2), st.sampled_from([1.0, 0.5, 0.1, 0.01]))
def test_yosida_is_gamma_at_resolvent(spec, x, lam):
    p = make_potential(spec, 2)
    J = resolvent(p, lam, x)
    g = yosida(p, lam, x)
    gJ = p.gamma(J)
    assert np.linalg.norm(J + lam * gJ - x) <= 1e-10 * (1 + np.linalg.norm(x)) * 10
    assert np.linalg.norm(g - gJ) <= 1e-8 * (1 + np.linalg.norm(gJ))
    assert np.linalg.norm(g) <= np.linalg.norm(p.gamma(x)) + 1e-8


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2), points(2), st.sampled_from([1.0, 0.1]))
def test_yosida_monotone_and_lipschitz(spec, x, y, lam):
    p = make_potential(spec, 2)
    gx, gy = yosida(p, lam, x), yosida(p, lam, y)
    d = np.linalg.norm(x - y)
    assert np.dot(gx - gy, x - y) >= -1e-9 * (1 + d) ** 2
    assert np.linalg.norm(gx - gy) <= d / lam + 1e-8 * (1 + np.linalg.norm(gx))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2))
def test_moreau_increases_to_k(spec, x):
    p = make_potential(spec, 2)
    lams = [2.0 ** -j for j in range(0, 14)]
    vals = [moreau(p, lam, x) for lam in lams]
    k = p.k(x)
    assert all(b >= a - 1e-10 * (1 + abs(k)) for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= k + 1e-10 * (1 + abs(k))
    # k - k_lambda <= lambda |gamma(x)|^2 / 2
    g2 = float(np.sum(p.gamma(x) ** 2))
    for lam, v in zip(lams, vals):
        assert k - v <= 0.5 * lam * g2 + 1e-10 * (1 + abs(k))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2), points(2))
def test_fenchel_young_nonnegative(spec, y, r):
    p = make_potential(spec, 2)
    assert fenchel_young_gap(p, y, r) >= -1e-12 * (1 + abs(p.k(y)))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(BUILTIN_SPECS), points(2), st.sampled_from([1.0, 0.1, 0.01]))
def test_pluto_identity_and_inequality(spec, x, lam):
    p = make_potential(spec, 2)
    t = pluto_terms(p, lam, x)
    assert abs(t["lhs"] - t["rhs"]) <= 1e-8 * (1 + abs(t["upper"]))
    assert t["lhs"] <= t["upper"] + 1e-8 * (1 + abs(t["upper"]))


@pytest.mark.parametrize("spec", [{"kind": "p_power", "p": q} for q in (1.5, 2.0, 3.0, 4.0)]
                         + [{"kind": "cosh"}, {"kind": "exp_quadratic"}, {"kind": "anisotropic"}],
                         ids=str)
def test_numeric_conjugate_matches_closed_form(spec):
    p = make_potential(spec, 2)
    y = np.random.default_rng(1).normal(scale=2.0, size=(200, 2))
    exact = conjugate(p, y)
    for method in ("scalar", "newton"):
        num = conjugate(p, y, method=method)
        np.testing.assert_allclose(num, exact, rtol=1e-6, atol=1e-12)


def test_conjugate_dominates_samples(cosh2):
    rng = np.random.default_rng(2)
    y = rng.normal(size=(50, 2))
    r = rng.normal(scale=2, size=(50, 2))
    assert np.all(conjugate(cosh2, y) >= np.sum(y * r, axis=-1) - cosh2.k(r) - 1e-12)


def test_generic_newton_routes_agree():
    for spec in BUILTIN_SPECS:
        p = make_potential(spec, 2)
        g = strip_closed_forms(p)
        x = np.random.default_rng(3).normal(size=(100, 2))
        np.testing.assert_allclose(resolvent(g, 0.3, x), resolvent(p, 0.3, x), atol=1e-9)


def test_yosida_jacobian_matches_differences(cosh2):
    x = np.array([0.7, -1.2])
    J = yosida_jacobian(cosh2, 0.2, x)
    h = 1e-6
    fd = np.stack([(yosida(cosh2, 0.2, x + h * e) - yosida(cosh2, 0.2, x - h * e)) / (2 * h)
                   for e in np.eye(2)], axis=-1)
    np.testing.assert_allclose(J, fd, atol=1e-6)


def test_regularized_wrapper(cosh2):
    r = RegularizedPotential(cosh2, 0.5)
    x = np.array([1.0, 0.0])
    np.testing.assert_allclose(r.resolvent(x), [COSH_S, 0.0], atol=1e-12)
    assert r.k(x) <= cosh2.k(x)
    with pytest.raises(ValueError):
        RegularizedPotential(cosh2, 0.0)


def test_nonmonotone_gamma_fails_loudly():
    # gamma = -x is the gradient of a concave function; y + lam gamma(y) = x has no solution for lam = 1
    bad = Potential(dim=1, eval_k=lambda x: -0.5 * np.sum(x * x, axis=-1),
                    eval_gamma=lambda x: -x, hessian=lambda x: -np.ones(x.shape + (1,)))
    for lam in (1.0, 2.0):
        with pytest.raises(NonConvergence) as info:
            resolvent(bad, lam, np.array([1.0]))
        assert info.value.record()["kind"] == "non_convergence"


def test_conjugate_out_of_range_raises():
    p = make_potential({"kind": "exp_quadratic"}, 1)
    with pytest.raises(NonConvergence):
        conjugate(p, np.array([1e308]), method="scalar")


def test_registration_hook():
    @register_potential("test_quartic_sum")
    def factory(spec, dim):
        return Potential(dim=dim, eval_k=lambda x: 0.25 * np.sum(x ** 4, axis=-1),
                         eval_gamma=lambda x: x ** 3, name="test_quartic_sum")

    assert "test_quartic_sum" in registered_kinds()
    p = make_potential({"kind": "test_quartic_sum"}, 2)
    y = resolvent(p, 1.0, np.array([2.0, 0.0]))
    # y + y^3 = 2 has root y = 1
    np.testing.assert_allclose(y, [1.0, 0.0], atol=1e-9)
    ref = minimize_scalar(lambda r: -(1.5 * r - 0.25 * r ** 4), bounds=(0, 3), method="bounded",
                          options={"xatol": 1e-12})
    assert conjugate(p, np.array([1.5, 0.0])) == pytest.approx(-ref.fun, rel=1e-8)


def test_unknown_kind():
    with pytest.raises(KeyError):
        make_potential({"kind": "nope"}, 1)

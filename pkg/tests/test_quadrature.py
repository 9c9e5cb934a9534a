import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radaupde.quadrature import (
    barycentric_weights,
    flipped_lgr_rule,
    lagrange_diff_matrix,
    lagrange_interpolate,
    legendre_eval,
    standard_lgr_rule,
)

from oracles import lagrange_derivative_by_fit, monomial_integral, radau_by_moments


def test_flipped_two_point_rule():
    rule = flipped_lgr_rule(2)
    np.testing.assert_allclose(rule.nodes, [-1.0 / 3.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1.5, 0.5], atol=1e-15)
    assert rule.flipped


def test_standard_two_point_rule():
    rule = standard_lgr_rule(2)
    np.testing.assert_allclose(rule.nodes, [-1.0, 1.0 / 3.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [0.5, 1.5], atol=1e-15)


def test_single_point_rules():
    np.testing.assert_array_equal(flipped_lgr_rule(1).nodes, [1.0])
    np.testing.assert_array_equal(flipped_lgr_rule(1).weights, [2.0])
    np.testing.assert_array_equal(standard_lgr_rule(1).nodes, [-1.0])


@pytest.mark.parametrize("n", range(2, 11))
@pytest.mark.parametrize("flipped", [True, False])
def test_rules_match_moment_oracle(n, flipped):
    rule = flipped_lgr_rule(n) if flipped else standard_lgr_rule(n)
    nodes, weights = radau_by_moments(n, flipped)
    np.testing.assert_allclose(rule.nodes, nodes, atol=1e-12)
    np.testing.assert_allclose(rule.weights, weights, atol=1e-11)


def test_three_point_fourth_moment():
    assert abs(flipped_lgr_rule(3).integrate(lambda r: r**4) - 0.4) < 1e-12


@pytest.mark.parametrize("n", range(1, 9))
def test_exactness_to_degree_2n_minus_2(n):
    for rule in (flipped_lgr_rule(n), standard_lgr_rule(n)):
        assert abs(rule.weights.sum() - 2.0) < 1e-13
        for k in range(2 * n - 1):
            assert abs(rule.integrate(rule.nodes**k) - monomial_integral(k)) < 1e-12


@pytest.mark.parametrize("n", range(1, 11))
def test_mirror_and_confinement(n):
    f, s = flipped_lgr_rule(n), standard_lgr_rule(n)
    np.testing.assert_allclose(s.nodes, -f.nodes[::-1], atol=1e-15)
    np.testing.assert_array_equal(f.weights, s.weights[::-1])
    assert f.nodes[-1] == 1.0 and np.all(f.nodes > -1.0)
    assert s.nodes[0] == -1.0 and np.all(s.nodes < 1.0)
    assert np.all(np.diff(f.nodes) > 0) and np.all(f.weights > 0)


def test_rule_rejects_zero_points():
    with pytest.raises(ValueError):
        flipped_lgr_rule(0)


def test_legendre_recurrence_values():
    r = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(legendre_eval(2, r), 1.5 * r**2 - 0.5, atol=1e-15)
    np.testing.assert_allclose(legendre_eval(3, r), 2.5 * r**3 - 1.5 * r, atol=1e-15)


def test_three_point_diff_matrix_row():
    D = lagrange_diff_matrix([-1.0, 0.0, 1.0], [0.0, 1.0]).entries
    np.testing.assert_allclose(D[0], [-0.5, 0.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(D[1], [0.5, -2.0, 1.5], atol=1e-15)


@pytest.mark.parametrize("n", range(1, 8))
def test_diff_matrix_matches_fit_oracle(n):
    rule = flipped_lgr_rule(n)
    support = np.concatenate(([-1.0], rule.nodes))
    D = lagrange_diff_matrix(support, rule.nodes).entries
    np.testing.assert_allclose(D, lagrange_derivative_by_fit(support, rule.nodes), atol=1e-9)


@pytest.mark.parametrize("n", range(1, 7))
def test_diff_matrix_rows_and_polynomials(n):
    rule = flipped_lgr_rule(n)
    support = np.concatenate(([-1.0], rule.nodes))
    D = lagrange_diff_matrix(support, rule.nodes).entries
    assert D.shape == (n, n + 1)
    assert np.max(np.abs(D.sum(axis=1))) < 1e-12
    for k in range(1, n + 1):
        np.testing.assert_allclose(D @ support**k, k * rule.nodes ** (k - 1), atol=1e-10)


def test_diff_matrix_needs_support_points():
    with pytest.raises(ValueError):
        lagrange_diff_matrix([-1.0, 0.0, 1.0], [0.5])


def test_duplicate_support_rejected():
    with pytest.raises(ValueError):
        barycentric_weights([0.0, 0.5, 0.5])


def test_interpolate_quadratic():
    assert lagrange_interpolate([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 0.5) == pytest.approx(0.25)


def test_interpolate_hits_support_and_trailing_dims():
    support = np.array([0.0, 0.3, 1.0])
    values = np.stack([support, support**2], axis=1)
    out = lagrange_interpolate(support, values, [0.3, 0.5])
    np.testing.assert_allclose(out, [[0.3, 0.09], [0.5, 0.25]], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31 - 1))
def test_quadrature_exact_for_random_polynomials(n, seed):
    coef = np.random.default_rng(seed).normal(size=2 * n - 1)
    poly = np.polynomial.Polynomial(coef)
    exact = poly.integ()(1.0) - poly.integ()(-1.0)
    for rule in (flipped_lgr_rule(n), standard_lgr_rule(n)):
        assert abs(rule.integrate(poly) - exact) < 1e-11 * max(1.0, np.abs(coef).sum())


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**31 - 1),
       q=st.floats(-1.0, 1.0, allow_nan=False))
def test_interpolation_reproduces_polynomials(n, seed, q):
    rule = flipped_lgr_rule(n)
    support = np.concatenate(([-1.0], rule.nodes))
    poly = np.polynomial.Polynomial(np.random.default_rng(seed).normal(size=n + 1))
    assert abs(lagrange_interpolate(support, poly(support), q) - poly(q)) < 1e-10

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as L

from radau_mpc.lgr_basis import (diff_matrix, lagrange_interpolate, legendre_eval, lgr_grid,
                                 lgr_nodes, lgr_weights, map_time, unmap_time)

orders = st.integers(min_value=1, max_value=16)


@pytest.mark.parametrize("n, tau, expected", [(0, 0.37, (1.0, 0.0)), (1, -0.5, (-0.5, 1.0)),
                                              (2, 1.0, (1.0, 3.0))])
def test_legendre_values(n, tau, expected):
    assert np.allclose(legendre_eval(n, tau), expected, atol=1e-14)


def test_legendre_matches_numpy_series():
    tau = np.linspace(-1, 1, 41)
    for n in range(12):
        c = np.zeros(n + 1)
        c[n] = 1
        p, dp = legendre_eval(n, tau)
        assert np.allclose(p, L.legval(tau, c), atol=1e-12)
        assert np.allclose(dp, L.legval(tau, L.legder(c)), atol=1e-10)


def test_small_node_sets():
    assert np.array_equal(lgr_nodes(1), [-1.0])
    assert np.allclose(lgr_nodes(2), [-1, 1 / 3], atol=1e-15)
    s6 = np.sqrt(6)
    assert np.allclose(lgr_nodes(3), [-1, (1 - s6) / 5, (1 + s6) / 5], atol=1e-14)
    assert np.allclose(lgr_weights(1), [2.0])
    assert np.allclose(lgr_weights(2), [0.5, 1.5], atol=1e-15)
    assert np.allclose(diff_matrix(1), [[-0.5, 0.5]])


@given(orders)
@settings(max_examples=40, deadline=None)
def test_nodes_are_radau_roots(N):
    tau = lgr_nodes(N)
    c = np.zeros(N + 1)
    c[N - 1] = c[N] = 1
    assert tau[0] == -1.0
    assert np.all(np.diff(tau) > 0) and tau[-1] < 1
    assert np.max(np.abs(L.legval(tau, c))) <= 1e-12


@given(orders)
@settings(max_examples=40, deadline=None)
def test_quadrature_exact_to_degree_2n_minus_2(N):
    tau, w = lgr_nodes(N), lgr_weights(N)
    assert abs(w.sum() - 2) <= 1e-12
    assert np.all(w > 0)
    for k in range(2 * N - 1):
        exact = 2 / (k + 1) if k % 2 == 0 else 0.0
        assert abs(w @ tau ** k - exact) <= 1e-10


@given(orders, st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_differentiation_exact_to_degree_n(N, seed):
    rng = np.random.default_rng(seed)
    coef = rng.normal(size=N + 1)
    pts = np.append(lgr_nodes(N), 1.0)
    D = diff_matrix(N)
    got = D @ np.polynomial.polynomial.polyval(pts, coef)
    want = np.polynomial.polynomial.polyval(pts[:-1], np.polynomial.polynomial.polyder(coef))
    assert np.max(np.abs(got - want)) <= 1e-8 * max(1.0, np.max(np.abs(coef)))
    assert np.max(np.abs(D.sum(axis=1))) <= 1e-10


def test_monomial_tau_n_differentiated_exactly():
    for N in range(1, 17):
        pts = np.append(lgr_nodes(N), 1.0)
        assert np.max(np.abs(diff_matrix(N) @ pts ** N - N * pts[:-1] ** (N - 1))) <= 1e-9


def test_order_validation():
    for bad in (0, 65, 2.5, -1):
        with pytest.raises(ValueError):
            lgr_nodes(bad)


def test_map_time_round_trip():
    assert map_time(-1, 3, 7) == 3 and map_time(1, 3, 7) == 7
    assert np.isclose(map_time(1 / 3, 0, 2), 4 / 3)
    tau = np.linspace(-1, 1, 9)
    assert np.allclose(unmap_time(map_time(tau, 0.4, 1.7), 0.4, 1.7), tau, atol=1e-15)
    with pytest.raises(ValueError):
        map_time(0.0, 1.0, 1.0)


def test_grid_interpolates_polynomials():
    g = lgr_grid(6)
    vals = g.points ** 5 - 2 * g.points
    x = np.linspace(-1, 1, 13)
    assert np.allclose(g.interpolate(vals, x), x ** 5 - 2 * x, atol=1e-12)
    assert g.interpolate(vals, g.points[2:3])[0] == vals[2]
    assert lgr_grid(6) is g
    with pytest.raises(ValueError):
        g.nodes[0] = 0.0


def test_lagrange_interpolate_channels():
    xk = np.array([-1.0, 0.0, 1.0])
    fk = np.stack([xk ** 2, 3 * xk], axis=1)
    out = lagrange_interpolate(xk, fk, np.array([0.5]))
    assert np.allclose(out, [[0.25, 1.5]])

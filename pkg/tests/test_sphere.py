import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from locpress.sphere import (MAX_DEGREE, ball_integral, build_circle_rule, build_radial_grid,
                             build_sphere_rule, geometric_radial_grid, sigma, sphere_average,
                             weight)


def moment_oracle(a, b, c):
    """Normalized sphere average of xi1^a xi2^b xi3^c (Beta-function form)."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    g = gamma((a + 1) / 2) * gamma((b + 1) / 2) * gamma((c + 1) / 2)
    return 2 * g / gamma((a + b + c + 3) / 2) / (4 * math.pi)


def rule_moment(rule, a, b, c):
    n = rule.nodes
    return float(rule.weights @ (n[:, 0] ** a * n[:, 1] ** b * n[:, 2] ** c))


def test_degree2_second_moments():
    rule = build_sphere_rule(2)
    assert abs(rule_moment(rule, 2, 0, 0) - 1 / 3) <= 1e-14
    assert abs(rule_moment(rule, 1, 1, 0)) <= 1e-14


def test_degree8_fourth_moment():
    rule = build_sphere_rule(8)
    assert abs(rule_moment(rule, 4, 0, 0) - 0.2) <= 1e-13
    assert abs(moment_oracle(4, 0, 0) - 0.2) <= 1e-15


@pytest.mark.parametrize("degree", [2, 5, 8, 16, 31])
def test_weights_and_measured_exactness(degree):
    rule = build_sphere_rule(degree)
    assert abs(rule.weights.sum() - 1) <= 1e-14
    assert np.all(rule.weights > 0)
    assert np.allclose(np.linalg.norm(rule.nodes, axis=1), 1.0, atol=1e-15)
    assert rule.exactness_degree >= degree


@given(degree=st.integers(2, 24), a=st.integers(0, 24), b=st.integers(0, 24),
       c=st.integers(0, 24))
def test_monomials_within_exactness_are_exact(degree, a, b, c):
    rule = build_sphere_rule(degree)
    if a + b + c > rule.exactness_degree:
        return
    assert abs(rule_moment(rule, a, b, c) - moment_oracle(a, b, c)) <= 1e-13


@given(degree=st.integers(2, 40))
def test_first_and_second_moments_any_rule(degree):
    rule = build_sphere_rule(degree)
    first = rule.weights @ rule.nodes
    second = np.einsum("k,ki,kj->ij", rule.weights, rule.nodes, rule.nodes)
    assert np.abs(first).max() <= 1e-13
    assert np.abs(second - np.eye(3) / 3).max() <= 1e-13


def test_degree_limits():
    with pytest.raises(ValueError):
        build_sphere_rule(1)
    with pytest.raises(ValueError):
        build_sphere_rule(MAX_DEGREE + 1)


def test_circle_rule_trig_exactness():
    rule = build_circle_rule(10)
    phi = np.arctan2(rule.nodes[:, 1], rule.nodes[:, 0])
    for m in range(1, rule.exactness_degree + 1):
        assert abs(rule.weights @ np.cos(m * phi)) <= 1e-14
    assert rule.exactness_degree >= 10


def test_sphere_average_examples():
    rule = build_sphere_rule(8)
    x = np.array([0.3, -1.0, 2.0])
    assert sphere_average(lambda y: np.ones(len(y)), x, 0.7, rule) == pytest.approx(1, abs=1e-14)
    r = 0.45
    val = sphere_average(lambda y: (y[:, 0] - x[0]) ** 2, x, r, rule)
    assert val == pytest.approx(r * r / 3, abs=1e-15)
    with pytest.raises(ValueError):
        sphere_average(lambda y: y[:, 0], x, 0.0, rule)


def test_ball_volume_and_singular_integrand():
    rule = build_sphere_rule(8)
    x = np.zeros(3)
    assert ball_integral(lambda y: np.ones(y.shape[:-1]), x, 0, 1, rule) == pytest.approx(
        4 * math.pi / 3, abs=1e-12)
    val = ball_integral(lambda y: 1 / np.linalg.norm(y, axis=-1), x, 0, 1, rule)
    assert abs(val - 2 * math.pi) <= 1e-8


def test_sigma_kernel_shell_integral_vanishes():
    rule = build_sphere_rule(8)
    x = np.array([0.1, 0.2, 0.3])

    def g(y):
        z = y - x
        n = np.linalg.norm(z, axis=-1)
        return sigma(z / n[..., None])[..., 0, 0] / n**3

    assert abs(ball_integral(g, x, 0.5, 1.0, rule)) <= 1e-13


def test_ball_integral_additivity():
    rule = build_sphere_rule(20)
    x = np.array([0.2, -0.1, 0.4])

    def g(y):
        return np.exp(-np.sum(y * y, axis=-1)) * np.cos(y[..., 0])

    whole = ball_integral(g, x, 0, 1.3, rule)
    parts = ball_integral(g, x, 0, 0.6, rule) + ball_integral(g, x, 0.6, 1.3, rule)
    assert abs(whole - parts) <= 1e-12
    with pytest.raises(ValueError):
        ball_integral(g, x, 1.0, 1.0, rule)


def test_sigma_examples():
    assert np.allclose(sigma([1.0, 0, 0]), np.diag([2.0, -1, -1]), atol=0)
    with pytest.raises(ValueError):
        sigma([1.0, 1.0, 0.0])


unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(d=unit_vectors, u=st.tuples(*[st.floats(-10, 10)] * 3))
def test_sigma_trace_free_symmetric_and_bounded(d, u):
    d = np.array(d) / np.linalg.norm(d)
    s = sigma(d)
    u = np.array(u)
    assert abs(np.trace(s)) <= 1e-14
    assert np.array_equal(s, s.T)
    assert abs(u @ s @ u) <= 2 * (u @ u) * (1 + 1e-14) + 1e-300


def test_sigma_bound_on_random_pairs(rng):
    d = rng.normal(size=(1000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    u = rng.normal(size=(1000, 3))
    q = np.einsum("ki,kij,kj->k", u, sigma(d), u)
    assert np.all(np.abs(q) <= 2 * np.sum(u * u, axis=1))


def test_weight_values():
    assert weight(0.5) == 1.0
    assert weight(1.5) == 0.5
    assert weight(3.0) == 0.0
    with pytest.raises(ValueError):
        weight(-0.1)


@given(lam=st.floats(0, 5))
def test_weight_continuous_piecewise_linear(lam):
    expect = 1.0 if lam <= 1 else (2 - lam if lam <= 2 else 0.0)
    assert weight(lam) == pytest.approx(expect, abs=1e-15)


def test_radial_grid_nodes_and_exactness():
    g = build_radial_grid(0.0, 2.0, 6, (1.0,))
    assert np.all(g.nodes > 0) and np.all(g.nodes <= 2.0)
    for k in range(12):
        assert abs(g.weights @ g.nodes**k - 2.0 ** (k + 1) / (k + 1)) <= 1e-12 * 2.0**k
    assert abs(g.ball_weights.sum() - 8 / 3) <= 1e-13
    with pytest.raises(ValueError):
        build_radial_grid(1.0, 0.5)


def test_geometric_grid_integrates_linear_over_rho():
    g = geometric_radial_grid(0.8)
    assert abs(g.weights @ (g.nodes / g.nodes) - 0.8) <= 1e-12
    assert g.nodes.min() > 0


def _averaging_sides(f_pieces, breaks, r):
    """Both sides of (1/r) int_r^2r int_0^rho f dl drho = int_0^2r w(l/r) f(l) dl."""
    from numpy.polynomial import Polynomial as P

    def F(rho):
        out, lo = 0.0, 0.0
        for p, hi in zip(f_pieces, breaks[1:]):
            top = min(rho, hi)
            if top > lo:
                ip = p.integ()
                out += ip(top) - ip(lo)
            lo = hi
        return out

    grid = build_radial_grid(r, 2 * r, 20, [b for b in breaks])
    lhs = grid.weights @ np.array([F(x) for x in grid.nodes]) / r
    rhs = 0.0
    w1, w2 = P([1.0]), P([2.0, -1.0 / r])
    edges = sorted(set([0.0, r, 2 * r] + [b for b in breaks if 0 < b < 2 * r]))
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        idx = np.searchsorted(breaks, mid) - 1
        p = f_pieces[min(idx, len(f_pieces) - 1)]
        prod = (p * (w1 if mid < r else w2)).integ()
        rhs += prod(hi) - prod(lo)
    return lhs, rhs


def test_betaag_averaging_identity(rng):
    from numpy.polynomial import Polynomial as P

    for _ in range(20):
        r = rng.uniform(0.2, 1.5)
        inner = np.sort(rng.uniform(0, 2 * r, size=3))
        breaks = np.concatenate([[0.0], inner, [2 * r]])
        pieces = [P(rng.normal(size=rng.integers(1, 5))) for _ in range(len(breaks) - 1)]
        lhs, rhs = _averaging_sides(pieces, breaks, r)
        assert abs(lhs - rhs) <= 1e-10 * max(1, abs(rhs))

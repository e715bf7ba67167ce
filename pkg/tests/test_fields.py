import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from locpress.fields import (FIELD_KINDS, InvalidFieldParameter, exact_pressure,
                             lacunary_holder_bound, make_field)
from locpress.spectral import grid_points, poisson_residual, sample, sample_scalar, solve_pressure

PARAMS = {
    "taylor_green": {}, "taylor_green_2d": {}, "beltrami_abc": {},
    "random_solenoidal": {"seed": 3, "kmax": 3}, "random_solenoidal_2d": {"seed": 3},
    "lacunary_holder": {"alpha": 0.4, "n_modes": 6, "seed": 2},
    "gaussian_curl": {"seed": 1}, "constant": {"v": (0.3, -0.2, 1.0)},
    "linear_shear": {"gamma": 1.5}, "shear_wave": {"wavenumber": 2},
}


def _fd_grad(field, x, h):
    d = field.dim
    g = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        g[:, j] = (field.velocity(x + e) - field.velocity(x - e)) / (2 * h)
    return g


def fd_richardson(field, x, h=1e-4):
    return (4 * _fd_grad(field, x, h / 2) - _fd_grad(field, x, h)) / 3


def test_taylor_green_divergence_and_origin():
    f = make_field("taylor_green", {})
    assert abs(f.divergence(np.array([0.3, 1.1, 2.0]))) <= 1e-12
    assert np.array_equal(f.velocity(np.zeros(3)), np.zeros(3))
    x = np.array([0.3, 1.1, 2.0])
    expect = [np.sin(0.3) * np.cos(1.1) * np.cos(2.0), -np.cos(0.3) * np.sin(1.1) * np.cos(2.0), 0]
    assert np.allclose(f.velocity(x), expect, atol=1e-15)


def test_abc_is_beltrami_and_origin_value():
    f = make_field("beltrami_abc", {"A": 1, "B": 1, "C": 1})
    assert np.allclose(f.velocity(np.zeros(3)), [1, 1, 1], atol=1e-15)
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, (50, 3))
    assert np.abs(f.curl(pts) - f.velocity(pts)).max() <= 1e-12


def test_taylor_green_gradient_matches_fd():
    f = make_field("taylor_green")
    x = np.array([np.pi / 2, np.pi / 2, 0.0])
    assert np.abs(f.eval(x)[1] - fd_richardson(f, x)).max() <= 1e-8


@pytest.mark.parametrize("kind", sorted(PARAMS))
def test_gradients_match_fd_all_kinds(kind):
    f = make_field(kind, PARAMS[kind])
    x = np.random.default_rng(1).uniform(-1, 1, f.dim) + 0.3
    scale = max(1.0, np.abs(f.eval(x)[1]).max())
    tol = 1e-7 if kind == "lacunary_holder" else 1e-8
    assert np.abs(f.eval(x)[1] - fd_richardson(f, x, 1e-4 if kind != "lacunary_holder" else 1e-5)
                  ).max() <= tol * scale


@pytest.mark.parametrize("kind", sorted(PARAMS))
def test_divergence_free_at_random_points(kind):
    f = make_field(kind, PARAMS[kind])
    pts = np.random.default_rng(2).uniform(-3, 3, (100, f.dim))
    u, g = f.eval(pts)
    assert np.abs(np.trace(g, axis1=-2, axis2=-1)).max() <= 1e-10 * max(1.0, np.abs(g).max())


def test_kind_enum_covered():
    assert set(PARAMS) | {"grid_sampled"} == set(FIELD_KINDS)


def test_lacunary_seminorm_bound_dominates_sampled_ratio():
    f = make_field("lacunary_holder", {"alpha": 0.3, "N": 8, "seed": 7})
    hs = f.holder_seminorm()
    assert hs.alpha == 0.3
    assert hs.value == pytest.approx(lacunary_holder_bound(0.3, np.arange(1, 9)))
    rng = np.random.default_rng(7)
    x = rng.uniform(-2, 2, (10_000, 3))
    d = rng.normal(size=(10_000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d *= 10 ** rng.uniform(-4, 0.5, (10_000, 1))
    du = np.linalg.norm(f.velocity(x + d) - f.velocity(x), axis=1)
    ratio = du / np.linalg.norm(d, axis=1) ** 0.3
    assert ratio.max() <= hs.value


def test_constant_field_has_zero_seminorm_and_pressure():
    f = make_field("constant", {"v": (1.0, 2.0, 3.0)})
    pts = np.random.default_rng(0).normal(size=(5, 3))
    assert np.allclose(f.velocity(pts), [1, 2, 3])
    p = exact_pressure(f)
    assert np.all(p.value(pts) == 0)
    lac = make_field("lacunary_holder", {"alpha": 0.5, "n_modes": 1})
    assert lac.holder_seminorm().value > 0


def test_abc_exact_pressure_solves_poisson():
    f = make_field("beltrami_abc", {"A": 1, "B": 1, "C": 1})
    p = exact_pressure(f)
    grid = sample_scalar(lambda x: p.value(x), 16)
    assert poisson_residual(sample(f, 16), grid) <= 1e-10
    assert abs(grid.values.mean()) <= 1e-14


def test_taylor_green_exact_matches_spectral():
    f = make_field("taylor_green")
    pts = grid_points(32)
    spec = solve_pressure(sample(f, 32))
    exact = exact_pressure(f).value(pts)
    assert np.abs(spec.values - exact).max() <= 1e-10


def test_exact_pressure_absent_for_random():
    assert exact_pressure(make_field("random_solenoidal", {"seed": 1})) is None


@pytest.mark.parametrize("kind,params", [
    ("lacunary_holder", {"alpha": 1.2}),
    ("lacunary_holder", {"alpha": 0.0}),
    ("random_solenoidal", {"kmax": 0}),
    ("grid_sampled", {}),
    ("grid_sampled", {"values": np.zeros((3, 4, 4, 4)), "L": -1}),
    ("no_such_kind", {}),
])
def test_invalid_parameters(kind, params):
    with pytest.raises(InvalidFieldParameter, match=kind.split("_")[0]):
        make_field(kind, params)


def test_grid_sampled_reproduces_band_limited_field():
    src = make_field("random_solenoidal", {"seed": 5, "kmax": 3})
    g = sample(src, 16)
    f = make_field("grid_sampled", {"values": g.values, "L": g.L})
    pts = np.random.default_rng(4).uniform(0, 2 * np.pi, (20, 3))
    u0, g0 = src.eval(pts)
    u1, g1 = f.eval(pts)
    assert np.abs(u0 - u1).max() <= 1e-12
    assert np.abs(g0 - g1).max() <= 1e-11


def test_grid_sampled_without_wrap_rejects_outside_points():
    g = sample(make_field("taylor_green"), 8)
    f = make_field("grid_sampled", {"values": g.values, "wrap": False})
    f.velocity(np.array([1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        f.velocity(np.array([7.0, 1.0, 1.0]))


def test_describe_contains_kind_and_params():
    d = make_field("beltrami_abc", {"A": 2.0}).describe()
    assert d["kind"] == "beltrami_abc" and d["A"] == 2.0


@given(seed=st.integers(0, 2**16), kmax=st.integers(1, 3))
def test_random_solenoidal_is_divergence_free(seed, kmax):
    f = make_field("random_solenoidal", {"seed": seed, "kmax": kmax})
    assert f.max_leray_defect() <= 1e-12
    x = np.random.default_rng(seed).uniform(0, 7, (10, 3))
    assert np.abs(f.divergence(x)).max() <= 1e-10


@given(alpha=st.floats(0.05, 0.95), seed=st.integers(0, 1000))
def test_lacunary_bound_holds_on_random_pairs(alpha, seed):
    f = make_field("lacunary_holder", {"alpha": alpha, "n_modes": 6, "seed": seed})
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (200, 3))
    d = rng.normal(size=(200, 3)) * 10 ** rng.uniform(-3, 0, (200, 1))
    du = np.linalg.norm(f.velocity(x + d) - f.velocity(x), axis=1)
    assert np.all(du <= f.holder_seminorm().value * np.linalg.norm(d, axis=1) ** alpha * (1 + 1e-12))

import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from locpress.fields import exact_pressure, make_field
from locpress.sphere import build_sphere_rule
from locpress.spectral import (MAGIC, SpectralGrid, coefficient_l2, divergence_max, gradient,
                               grid_points, interpolate, laplacian, leray, naprpr_constant, norms,
                               poisson_residual, products, read_grid, riesz, sample,
                               sample_scalar, sinc_average, solve_pressure, ufty_ratio,
                               velocity_gradient, write_grid)

TWO_PI = 2 * np.pi


def random_scalar(seed, N=16, kmax=4):
    f = make_field("random_solenoidal", {"seed": seed, "kmax": kmax})
    g = sample(f, N).component(0)
    return g.with_values(g.values - g.values.mean())


def test_zero_velocity_gives_zero_pressure():
    u = SpectralGrid(np.zeros((3, 8, 8, 8)), TWO_PI, 3)
    assert np.all(solve_pressure(u).values == 0)


def test_shear_gives_zero_pressure():
    u = sample(make_field("shear_wave"), 16)
    assert np.abs(solve_pressure(u).values).max() <= 1e-15


def test_taylor_green_pressure_matches_closed_form():
    f = make_field("taylor_green")
    p = solve_pressure(sample(f, 32))
    assert np.abs(p.values - exact_pressure(f).value(grid_points(32))).max() <= 1e-10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_poisson_residual_band_limited(seed):
    u = sample(make_field("random_solenoidal", {"seed": seed, "kmax": 3}), 24)
    assert poisson_residual(u, solve_pressure(u)) <= 1e-10


def test_divergent_input_warns():
    vals = np.zeros((3, 8, 8, 8))
    vals[0] = np.sin(grid_points(8)[..., 0])
    with pytest.warns(UserWarning):
        solve_pressure(SpectralGrid(vals, TWO_PI, 3))


def test_non_finite_input_rejected():
    vals = np.zeros((3, 8, 8, 8))
    vals[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        solve_pressure(SpectralGrid(vals, TWO_PI, 3))


def test_riesz_single_mode_sign():
    g = sample_scalar(lambda x: np.sin(x[..., 0]), 16)
    out = riesz(g, 0)
    assert np.abs(out.values - np.cos(grid_points(16)[..., 0])).max() <= 1e-13


def test_riesz_squares_sum_to_minus_identity():
    g = random_scalar(3)
    total = sum(riesz(riesz(g, i), i).values for i in range(3))
    assert np.abs(total + g.values).max() <= 1e-12


@given(seed=st.integers(0, 10_000), axis=st.integers(0, 2))
def test_riesz_is_a_contraction(seed, axis):
    g = random_scalar(seed, N=8, kmax=2)
    assert coefficient_l2(riesz(g, axis)) <= coefficient_l2(g) * (1 + 1e-12)


def test_riesz_pair_of_products_is_pressure():
    u = sample(make_field("random_solenoidal", {"seed": 9, "kmax": 2}), 16)
    ph = products(u)
    ph[:, :, 0, 0, 0] = 0
    uu = np.fft.ifftn(ph * 16**3, axes=(2, 3, 4)).real
    total = np.zeros_like(u.values[0])
    for i in range(3):
        for j in range(3):
            gij = SpectralGrid(uu[i, j], u.L, 3)
            total += riesz(riesz(gij, j), i).values
    assert np.abs(total - solve_pressure(u).values).max() <= 1e-12


def test_riesz_nonzero_mean_notice():
    g = sample_scalar(lambda x: 1 + np.sin(x[..., 1]), 8)
    with pytest.warns(UserWarning):
        riesz(g, 1)


def test_sinc_kills_first_zero_mode():
    # |k| = 2, r = pi/2 gives r|k| = pi
    g = sample_scalar(lambda x: np.cos(2 * x[..., 0]), 16)
    assert np.abs(sinc_average(g, np.pi / 2).values).max() <= 1e-15


def test_sinc_small_radius_is_identity():
    g = random_scalar(4)
    assert np.abs(sinc_average(g, 1e-6).values - g.values).max() <= 1e-9


def test_sinc_average_matches_sphere_quadrature():
    f = make_field("taylor_green")
    p = solve_pressure(sample(f, 32))
    src = exact_pressure(f)
    rule = build_sphere_rule(24)
    rng = np.random.default_rng(0)
    for r in (0.2, 0.4):
        avg = sinc_average(p, r)
        series = avg.to_series()
        for x in rng.uniform(0, TWO_PI, (20, 3)):
            assert abs(series.value(x) - src.pbar(x, r, rule)) <= 1e-6


def test_norms_of_constant_and_sine():
    c = sample_scalar(lambda x: np.full(x.shape[:-1], -2.5), 8)
    assert norms(c).L2 == pytest.approx(2.5 * TWO_PI**1.5, rel=1e-14)
    s = sample_scalar(lambda x: np.sin(x[..., 0]), 16)
    rep = norms(s)
    assert abs(rep.L2 - 2 * np.pi * np.sqrt(np.pi)) <= 1e-12
    assert rep.Linf == pytest.approx(1.0, abs=1e-12)
    assert rep.grad_L2 == pytest.approx(rep.L2, rel=1e-12)


def test_parseval():
    u = sample(make_field("random_solenoidal", {"seed": 2}), 16)
    assert abs(norms(u, with_pressure=False).L2 - coefficient_l2(u)) <= 1e-12 * coefficient_l2(u)


@given(seed=st.integers(0, 5000))
def test_norm_report_nonnegative_and_ordered(seed):
    u = sample(make_field("random_solenoidal", {"seed": seed, "kmax": 2}), 8)
    r = norms(u)
    vol = u.L**3
    assert min(r.L2, r.L3, r.L4, r.L6, r.Linf, r.grad_L2, r.lap_L2, r.gradp_L2) >= 0
    # Hoelder on a finite box: |f|_2 <= V^(1/2 - 1/q) |f|_q
    for q in (3, 4, 6):
        assert r.L2 <= vol ** (0.5 - 1 / q) * r.Lq(q) * (1 + 1e-12)
    assert r.L2 <= vol**0.5 * r.Linf * (1 + 1e-12)


def test_ufty_ratio_taylor_green_finite():
    c = ufty_ratio(sample(make_field("taylor_green"), 16))
    assert 0 < c < 10


def test_round_trip_and_hermitian_symmetry():
    g = random_scalar(6)
    assert g.round_trip_error() <= 1e-12
    c = g.coefficients()
    N = g.N
    idx = (-np.arange(N)) % N
    assert np.abs(c - np.conj(c[np.ix_(idx, idx, idx)])).max() <= 1e-15


def test_gradient_laplacian_leray():
    g = sample_scalar(lambda x: np.sin(x[..., 0]) * np.cos(2 * x[..., 2]), 16)
    pts = grid_points(16)
    dz = -2 * np.sin(pts[..., 0]) * np.sin(2 * pts[..., 2])
    assert np.abs(gradient(g).values[2] - dz).max() <= 1e-13
    assert np.abs(laplacian(g).values + 5 * g.values).max() <= 1e-12
    with pytest.raises(ValueError):
        gradient(sample(make_field("taylor_green"), 8))
    u = sample(make_field("taylor_green"), 16)
    grad = velocity_gradient(u)
    assert np.abs(np.trace(grad)).max() <= 1e-13
    noisy = u.with_values(u.values + np.stack([np.sin(pts[..., 0])] * 3))
    assert divergence_max(leray(noisy)) <= 1e-13


def test_interpolate_preserves_values():
    u = sample(make_field("beltrami_abc"), 8)
    fine = interpolate(u, 16)
    assert np.abs(fine.values[:, ::2, ::2, ::2] - u.values).max() <= 1e-13
    with pytest.raises(ValueError):
        interpolate(fine, 8)


def test_naprpr_constant_is_finite_and_bounds_gradient():
    p = solve_pressure(sample(make_field("random_solenoidal", {"seed": 1}), 16))
    for r in (0.1, 0.4):
        C = naprpr_constant(p, r)
        pb = sinc_average(p, r)
        grad_l2 = np.sqrt(sum(coefficient_l2(gradient(pb).component(i)) ** 2 for i in range(3)))
        assert grad_l2 <= (C / r) * coefficient_l2(pb) * (1 + 1e-12)
        assert C <= 1.0 + 1e-12  # sup_t |sin t| is at most one


def test_grid_file_round_trip(tmp_path):
    u = sample(make_field("taylor_green"), 8)
    path = tmp_path / "u.lpgr"
    write_grid(path, u)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack_from("<Id", raw, 4) == (8, TWO_PI)
    assert len(raw) == 16 + 3 * 8**3 * 8
    back = read_grid(path)
    assert np.array_equal(back.values, u.values) and back.L == u.L
    scalar = tmp_path / "p.lpgr"
    write_grid(scalar, u.component(0))
    assert read_grid(scalar).values.shape == (8, 8, 8)


def test_grid_file_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(b"XXXX" + b"\0" * 12)
    with pytest.raises(ValueError):
        read_grid(bad)
    short = tmp_path / "short"
    short.write_bytes(b"LP")
    with pytest.raises(ValueError):
        read_grid(short)

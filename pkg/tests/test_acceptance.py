"""Acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion is reported rather than hidden.
"""
import json
import math
import time

import numpy as np
import pytest

from locpress.bounds import bounds_report, holder_scan, pi_scaling, sigma_bound_check
from locpress.cli import main
from locpress.fields import exact_pressure, make_field
from locpress.identities import identity_suite
from locpress.localform import b_ode_residual, pbar, reference_pressure
from locpress.nsmon import (FGT_NAMES, NSConfig, criteria_monitor, cross_term_identity,
                            fgt_report, ns_step, run, state_from_field, with_overrides)
from locpress.sphere import build_sphere_rule
from locpress.spectral import sample, sinc_average, solve_pressure

TWO_PI = 2 * np.pi


def _csv_residuals(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    col = lines[0].split(",").index("residual")
    return np.array([float(ln.split(",")[col]) for ln in lines[1:]])


@pytest.fixture(scope="module")
def ns_tg32():
    conf = NSConfig(N=32, nu=0.1, dt=1e-3, T=2.0)
    return conf, run(conf)


# 1 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["taylor_green", "beltrami_abc"])
def test_c01_reconstruction(kind, tmp_path, verdict):
    out = tmp_path / "rec.csv"
    t0 = time.perf_counter()
    code = main(["reconstruct", "--profile", "ci", "--set", "grid.N=64", "--field", kind,
                 "--set", "probe.count=20", "--set", "probe.r=0.1,0.2,0.3,0.4",
                 "--out", str(out)])
    elapsed = time.perf_counter() - t0
    res = _csv_residuals(out.read_text())
    ok = code == 0 and len(res) == 80 and res.max() <= 1e-4 and elapsed <= 120
    verdict(1, f"beta + pi = p ({kind})", ok,
            f"max residual {res.max():.2e} over {len(res)} probes, {elapsed:.1f} s")
    assert ok


# 2 ---------------------------------------------------------------------------------

def test_c02_identity_suite(verdict):
    t0 = time.perf_counter()
    res = identity_suite()
    elapsed = time.perf_counter() - t0
    failed = [(c.id, c.test_function.name, m) for c, r, m in res if not r.passed]
    poly = max(r.residual for c, r, m in res
               if c.test_function.degree is not None and m == "analytic")
    ids = {c.id for c, _, _ in res}
    ok = (not failed and poly <= 1e-11 and elapsed <= 30
          and ids == {"idone", "idtwo", "idmany", "idthree", "intdxi1", "id2done", "id2two"})
    verdict(2, "sphere identity suite", ok,
            f"{len(res)} cases, {len(failed)} failed, polynomial max {poly:.1e}, {elapsed:.1f} s")
    assert ok


# 3 ---------------------------------------------------------------------------------

def test_c03_radial_ode(verdict):
    f = make_field("taylor_green")
    src = exact_pressure(f)
    rule = build_sphere_rule(24)
    pts = np.random.default_rng(3).uniform(0, TWO_PI, (10, 3))
    full = np.array([b_ode_residual(f, src, x, 0.3, 1e-3, rule) for x in pts])
    half = np.array([b_ode_residual(f, src, x, 0.3, 5e-4, rule) for x in pts])
    # ratio where the residual is above the rounding floor
    live = full > 1e-10
    ratio = float(np.min(full[live] / half[live]))
    ok = full.max() <= 1e-5 and live.sum() >= 5 and ratio >= 3.5
    verdict(3, "radial ODE for b", ok,
            f"max residual {full.max():.1e} at h=1e-3, min drop on halving {ratio:.3f}x")
    assert ok


# 4 ---------------------------------------------------------------------------------

def test_c04_fourier_sphere_average(verdict):
    f = make_field("random_solenoidal", {"seed": 2})
    p = solve_pressure(sample(f, 32))
    src = reference_pressure(f, 32)
    rule = build_sphere_rule(24)
    pts = np.random.default_rng(4).uniform(0, TWO_PI, (20, 3))
    worst = 0.0
    for r in (0.2, 0.4):
        avg = sinc_average(p, r).to_series()
        for x in pts:
            worst = max(worst, abs(pbar(src, x, r, rule) - avg.value(x)))
    ok = worst <= 1e-6
    verdict(4, "sinc multiplier vs sphere quadrature", ok, f"max difference {worst:.1e}")
    assert ok


# 5 ---------------------------------------------------------------------------------

def test_c05_explicit_constant_bounds(verdict):
    rows = []
    for seed in (0, 1, 2):
        rep = bounds_report(make_field("gaussian_curl", {"seed": seed}), None, [0.5, 1.0, 2.0],
                            seed=seed)
        for name in ("bl2", "betal2"):
            for c in rep.by_name(name):
                rows.append((seed, c.name, c.r, c.lhs, c.rhs, c.passed and c.lhs < c.rhs))
    sig = sigma_bound_check(10_000, seed=5)
    ok = len(rows) == 18 and all(r[-1] for r in rows) and sig.passed and sig.lhs < sig.rhs
    worst = max(r[3] / r[4] for r in rows)
    verdict(5, "bl2/betal2 constants and sigma kernel bound", ok,
            f"{len(rows)} checks, worst lhs/rhs {worst:.3f}, sigma ratio {sig.constant_measured:.4f}")
    assert ok


# 6 ---------------------------------------------------------------------------------

def test_c06_pi_scaling(verdict):
    radii = np.geomspace(0.02, 0.2, 6)
    slopes = {}
    for kind in ("taylor_green", "beltrami_abc", "random_solenoidal"):
        u = sample(make_field(kind, {"seed": 1} if kind == "random_solenoidal" else {}), 32)
        slopes[kind], _ = pi_scaling(u, radii, q=3)
    ok = all(abs(s - 2) <= 0.15 for s in slopes.values())
    verdict(6, "pi L3 norm scales like r^2", ok,
            ", ".join(f"{k} {s:.4f}" for k, s in slopes.items()))
    assert ok


# 7 ---------------------------------------------------------------------------------

def test_c07_holder_doubling(verdict):
    t0 = time.perf_counter()
    lo, hi = holder_scan(0.3, seed=0), holder_scan(0.8, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (abs(lo.fitted_exponent - 0.6) <= 0.1 and abs(hi.fitted_exponent - 1.0) <= 0.1
          and elapsed <= 300)
    verdict(7, "Holder exponent doubling", ok,
            f"alpha 0.3 -> {lo.fitted_exponent:.4f}, alpha 0.8 -> {hi.fitted_exponent:.4f}, "
            f"{elapsed:.1f} s")
    assert ok


# 8 ---------------------------------------------------------------------------------

def test_c08_solver_self_tests(ns_tg32, verdict):
    conf, traj = ns_tg32
    energy = traj.energy_residual()
    cross = max(s.cross_residual for s in traj.samples)
    rnd = state_from_field(make_field("random_solenoidal", {"seed": 9}), conf)
    res, a2 = cross_term_identity(rnd)
    cross = max(cross, res / a2)
    sconf = NSConfig(N=16, nu=0.1, dt=1e-3, T=0.1, criteria=None)
    st0 = st = state_from_field(make_field("shear_wave"), sconf)
    for _ in range(100):
        st = ns_step(st, sconf)
    exact = st0.uhat * math.exp(-sconf.nu * st.t)
    decay = float(np.abs(st.uhat - exact).max() / np.abs(exact).max())
    ok = energy <= 1e-6 and cross <= 1e-10 and decay <= 1e-8
    verdict(8, "NS energy, cross-term and single-mode decay", ok,
            f"energy {energy:.1e}/unit time, cross {cross:.1e}, decay {decay:.1e}")
    assert ok


# 9 ---------------------------------------------------------------------------------

def test_c09_fgt_report(ns_tg32, verdict):
    conf, traj = ns_tg32
    rep32 = fgt_report(traj, conf)
    conf48 = with_overrides(conf, N=48)
    rep48 = fgt_report(run(conf48, with_pi=False), conf48)
    change = {k: abs(rep48["integrals"][k]["value"] / rep32["integrals"][k]["value"] - 1)
              for k in FGT_NAMES}
    finite = all(v["finite"] for v in rep32["integrals"].values())
    ok = finite and max(change.values()) <= 0.05 and rep32["gradp_le_unau"]
    verdict(9, "time integrals finite and grid-stable", ok,
            f"{len(FGT_NAMES)} integrals, max N=32->48 change {max(change.values()):.1e}, "
            f"gradp<=unau {rep32['gradp_le_unau']}")
    assert ok


# 10 --------------------------------------------------------------------------------

def test_c10_criteria_monitor(ns_tg32, verdict):
    conf, traj = ns_tg32
    mon = criteria_monitor(traj, conf)
    logged = all(math.isfinite(c["lhs"]) and math.isfinite(c["rhs"]) for c in mon["cond"])
    ok = (conf.criteria.r == 0.2 and conf.criteria.gamma == 5
          and math.isfinite(mon["int_r_minus_gamma"]) and math.isfinite(mon["int_pi_L3_sq"])
          and len(mon["cond"]) == len(traj.samples) and logged and math.isfinite(mon["y_max"]))
    verdict(10, "criteria monitor", ok,
            f"int r^-gamma {mon['int_r_minus_gamma']:.4g}, int |pi|^2 {mon['int_pi_L3_sq']:.3e}, "
            f"{len(mon['cond'])} condition samples, y_max {mon['y_max']:.4f}")
    assert ok


# 11 --------------------------------------------------------------------------------

def test_c11_determinism(tmp_path, verdict):
    cmds = {
        "reconstruct.csv": ["reconstruct", "--profile", "ci", "--seed", "7", "--set",
                            "probe.count=4"],
        "ns.json": ["ns-run", "--seed", "7", "--set", "ns.N=16", "--set", "ns.T=0.1",
                    "--set", "ns.sample_every=20"],
        "holder.json": ["holder-scan", "--seed", "7", "--set", "holder.pairs=600"],
    }
    same = {}
    for name, argv in cmds.items():
        blobs = []
        for sub in ("one", "two"):
            (tmp_path / sub).mkdir(exist_ok=True)
            path = tmp_path / sub / name
            main(argv + ["--out", str(path)])
            blobs.append(path.read_bytes())
        same[name] = blobs[0] == blobs[1] and len(blobs[0]) > 0
    json.loads((tmp_path / "one" / "ns.json").read_text())
    ok = all(same.values())
    verdict(11, "byte-identical reports", ok, ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok

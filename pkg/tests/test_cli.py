import csv
import io
import json

import numpy as np
import pytest

from locpress.cli import DEFAULTS, UsageError, load_config, main
from locpress.spectral import read_grid

FAST_NS = ["--set", "ns.N=16", "--set", "ns.T=0.05", "--set", "ns.sample_every=10"]


def _csv_rows(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_reconstruct_single_probe(capsys):
    code = main(["reconstruct", "--field", "taylor_green", "--x", "1,1,1", "--r", "0.3",
                 "--set", "grid.N=32"])
    out = capsys.readouterr().out
    rows = _csv_rows(out)
    assert code == 0 and len(rows) == 1
    assert float(rows[0]["residual"]) <= 1e-4
    assert out.startswith("# command = reconstruct")


def test_verify_identities_ci_profile(tmp_path):
    out = tmp_path / "ids.json"
    assert main(["verify-identities", "--profile", "ci", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pass"] and rep["summary"]["failed"] == 0
    assert all(r["pass"] for r in rep["records"])
    assert (tmp_path / "ids.json.meta.json").exists()


@pytest.mark.parametrize("argv", [["bogus-cmd"], ["run", "bogus-cmd"], []])
def test_unknown_command_is_usage_error(argv, capsys):
    assert main(argv) == 1
    assert "usage:" in capsys.readouterr().err


def test_failed_check_exit_code(capsys):
    code = main(["reconstruct", "--x", "1,1,1", "--r", "0.3", "--set", "grid.N=32",
                 "--set", "probe.tol=1e-30"])
    assert code == 2
    assert _csv_rows(capsys.readouterr().out)


@pytest.mark.parametrize("extra", [
    ["--set", "nosection"],
    ["--set", "probe.x=1,2"],
    ["--field", "no_such_field"],
    ["--set", "probe.reference=magic"],
])
def test_config_errors(extra, capsys):
    assert main(["reconstruct", "--set", "grid.N=16"] + extra) == 1


def test_unwritable_output(tmp_path, capsys):
    target = tmp_path / "missing" / "dir" / "r.csv"
    assert main(["reconstruct", "--x", "1,1,1", "--out", str(target)]) == 1
    assert "not writable" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[grid]\nN = 24\n[probe]\nr = 0.25\n")
    cfg = load_config(ini, ["probe.r=0.15"], "ci")
    assert cfg.int("grid.N") == 24          # file beats profile
    assert cfg.floats("probe.r") == [0.15]  # override beats file
    assert cfg.int("quadrature.degree") == 8
    assert cfg.str("scan.count") == DEFAULTS["scan"]["count"]
    with pytest.raises(UsageError):
        load_config(tmp_path / "absent.ini")


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "sub" / "b.json"
    b.parent.mkdir()
    for p in (a, b):
        assert main(["ns-run", "--seed", "3", "--out", str(p)] + FAST_NS) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads((tmp_path / "a.json.meta.json").read_text())
    assert {"created_utc", "elapsed_s", "sha256"} <= set(meta)


def test_ns_run_outputs(tmp_path):
    rep, traj, snap = tmp_path / "ns.json", tmp_path / "t.csv", tmp_path / "u.lpgr"
    code = main(["ns-run", "--out", str(rep), "--set", f"ns.trajectory={traj}",
                 "--set", f"ns.snapshot={snap}"] + FAST_NS)
    assert code == 0
    body = json.loads(rep.read_text())
    assert all(body["checks"].values())
    assert set(body["checks"]) >= {"energy_identity", "cross_term_identity", "fgt_finite",
                                   "gradp_le_unau", "criteria_finite", "y_bounded"}
    rows = _csv_rows(traj.read_text())
    assert len(rows) == body["samples"]
    g = read_grid(str(snap))
    assert g.values.shape[-1] == 16


def test_ns_run_blowup_exit(capsys):
    assert main(["ns-run", "--set", "ns.dt=0.5", "--set", "ns.N=16", "--set", "ns.T=2"]) == 2
    assert "blowup" in json.loads(capsys.readouterr().out)


def test_export_grid_roundtrip(tmp_path, capsys):
    path = tmp_path / "tg.lpgr"
    assert main(["export-grid", "--out", str(path), "--set", "grid.N=16"]) == 0
    summary = json.loads(capsys.readouterr().out)["grid"]
    assert summary["bytes"] == path.stat().st_size
    g = read_grid(str(path))
    x = np.zeros(3)
    assert g.values[:, 0, 0, 0] == pytest.approx([np.sin(x[0]) * np.cos(x[1]), 0, 0], abs=1e-14)
    code = main(["reconstruct", "--field", "grid_sampled", "--set", f"field.path={path}",
                 "--set", "grid.N=16", "--x", "1,1,1", "--r", "0.3"])
    out = capsys.readouterr().out
    assert code == 0
    assert float(_csv_rows(out)[0]["residual"]) <= 1e-4


def test_export_grid_needs_out(capsys):
    assert main(["export-grid"]) == 1


def test_holder_scan_report(capsys):
    code = main(["holder-scan", "--set", "holder.alpha=0.5,0.8", "--set", "holder.pairs=600"])
    fits = json.loads(capsys.readouterr().out)["fits"]
    assert fits[0]["pass"] is None
    assert code == (0 if fits[1]["pass"] else 2)


def test_bounds_report_periodic(capsys):
    code = main(["bounds-report", "--set", "grid.N=16", "--set", "bounds.probes=4",
                 "--set", "bounds.r=0.3", "--set", "quadrature.degree=8"])
    rows = _csv_rows(capsys.readouterr().out)
    assert code == 0 and rows
    assert all(r["pass"] == "1" for r in rows)


def test_scan_r_rows(capsys):
    assert main(["scan-r", "--x", "1,1,1", "--set", "grid.N=32", "--set", "scan.count=4"]) == 0
    rows = _csv_rows(capsys.readouterr().out)
    r = [float(row["r"]) for row in rows]
    assert len(r) == 4 and r == sorted(r)

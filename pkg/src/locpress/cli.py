"""Batch command-line entry point.

Every command reads a ``key = value`` config with section headers, applies
``--profile`` and repeated ``--set section.key=value`` overrides, runs one
pipeline and writes a report whose bytes depend only on the resolved config.
Wall-clock data goes to a ``<out>.meta.json`` sidecar.

Exit codes: 0 when every pass-marked check passes, 2 on a failed check,
1 on usage, config or output errors.

Report schemas
--------------
reconstruct, scan-r   CSV  x1,x2,x3,r,pbar,b,beta,pi,p_ref,residual
bounds-report         CSV  name,q,a,r,lhs,rhs,constant_measured,pass
ns-run                JSON summary; trajectory CSV (t,E,y,...) at ``ns.trajectory``;
                      final velocity grid (LPGR) at ``ns.snapshot``
verify-identities     JSON {"records": [{id, params, lhs, rhs, residual, budget, pass}]}
holder-scan           JSON {"fits": [...]}
export-grid           LPGR binary grid; JSON summary on stdout

CSV reports start with ``#`` lines echoing the resolved config.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

COMMANDS = ("verify-identities", "reconstruct", "scan-r", "bounds-report", "holder-scan",
            "ns-run", "export-grid")

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "0", "out": ""},
    "field": {"kind": "taylor_green"},
    "grid": {"N": "64", "L": "6.283185307179586"},
    "quadrature": {"degree": "16", "radial_order": "24"},
    "probe": {"x": "", "count": "20", "r": "0.1,0.2,0.3,0.4", "tol": "1e-4",
              "reference": "spectral"},
    "scan": {"r_min": "0.05", "r_max": "0.6", "count": "12"},
    "identities": {"x": "0.4,-0.3,0.2", "r": "0.7", "h": "1e-3", "degree": "",
                   "extras": "true"},
    "bounds": {"r": "0.5,1,2", "q": "2,3", "probes": "20", "lattice": "5", "random": "48",
               "refine": "40"},
    "holder": {"alpha": "0.3,0.8", "pairs": "2000", "modes": "20", "bins": "12", "tol": "0.1"},
    "ns": {"N": "", "nu": "0.1", "dt": "1e-3", "T": "2", "sample_every": "50", "A": "",
           "initial": "taylor_green", "U": "0.5", "gamma": "5", "r": "0.2", "pi": "true",
           "energy_tol": "1e-6", "cross_tol": "1e-10", "trajectory": "", "snapshot": ""},
    "export": {"what": "velocity"},
}

PROFILES = {
    "ci": {"grid.N": "32", "quadrature.degree": "8"},
    "full": {"grid.N": "64", "quadrature.degree": "16"},
}


class UsageError(Exception):
    """Bad command line, config or output path (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- config -----------------------------------------------------------------------

class RunConfig:
    """Resolved string-valued config with typed accessors."""

    def __init__(self, sections: dict[str, dict[str, str]]):
        self.sections = sections

    def raw(self, key: str) -> str:
        sec, _, name = key.partition(".")
        try:
            return self.sections[sec][name]
        except KeyError:
            raise UsageError(f"missing config key {key!r}") from None

    def _conv(self, key, fn):
        val = self.raw(key)
        try:
            return fn(val)
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {val!r}") from None

    def str(self, key):
        return self.raw(key).strip()

    def int(self, key):
        return self._conv(key, int)

    def float(self, key):
        return self._conv(key, float)

    def bool(self, key):
        val = self.str(key).lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key!r}: expected a boolean, got {val!r}")

    def floats(self, key):
        return self._conv(key, lambda s: [float(t) for t in s.split(",") if t.strip()])

    def optional_float(self, key):
        return None if not self.str(key) else self.float(key)

    # output locations do not affect results, so they stay out of the echo
    _NO_ECHO = ("run.out", "ns.trajectory", "ns.snapshot")

    def echo(self) -> dict:
        out: dict = {}
        for s, kv in sorted(self.sections.items()):
            for k, v in sorted(kv.items()):
                if f"{s}.{k}" not in self._NO_ECHO:
                    out.setdefault(s, {})[k] = v
        return out

    def echo_lines(self) -> list[str]:
        return [f"{s}.{k} = {v}" for s, kv in self.echo().items() for k, v in kv.items()]


def _apply(sections, key: str, value: str):
    sec, dot, name = key.partition(".")
    if not dot or not sec or not name:
        raise UsageError(f"override {key!r} must look like section.key")
    sections.setdefault(sec, {})[name] = value


def load_config(path=None, overrides=(), profile=None) -> RunConfig:
    """Defaults, then profile, then the file, then ``section.key=value`` overrides."""
    sections = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if profile is not None:
        if profile not in PROFILES:
            raise UsageError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        for k, v in PROFILES[profile].items():
            _apply(sections, k, v)
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise UsageError(f"malformed config {path}: {exc}") from None
        for sec in cp.sections():
            for k, v in cp.items(sec):
                sections.setdefault(sec, {})[k] = v
    for item in overrides:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"override {item!r} must look like section.key=value")
        _apply(sections, key.strip(), value.strip())
    return RunConfig(sections)


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    for fn in (int, float):
        try:
            return fn(t)
        except ValueError:
            pass
    if "," in t:
        try:
            return tuple(float(s) for s in t.split(","))
        except ValueError:
            pass
    return t


def field_from_config(cfg: RunConfig):
    from .fields import make_field
    from .spectral import read_grid

    spec = dict(cfg.sections.get("field", {}))
    kind = spec.pop("kind", "").strip()
    if not kind:
        raise UsageError("field.kind is required")
    params = {k: _parse_value(v) for k, v in sorted(spec.items())}
    if kind == "grid_sampled":
        path = params.pop("path", None)
        if path is None:
            raise UsageError("grid_sampled fields need field.path to an LPGR grid file")
        try:
            g = read_grid(str(path))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load grid: {exc}") from None
        params.update(values=g.values, L=g.L)
    try:
        return make_field(kind, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --- output -----------------------------------------------------------------------

def _check_writable(path: str):
    if not path:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise UsageError(f"output path {path!r} is not writable")


def _finite_or_str(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite_or_str(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_str(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite_or_str(obj.item())
    return obj


def json_report(command: str, cfg: RunConfig, passed: bool, body: dict) -> str:
    doc = {"command": command, "version": __version__, "config": cfg.echo(),
           "pass": bool(passed), **body}
    return json.dumps(_finite_or_str(doc), indent=2, sort_keys=True) + "\n"


def csv_report(command: str, cfg: RunConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# command = {command}\n# version = {__version__}\n")
    for line in cfg.echo_lines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, path: str, command: str, started: float, extra_meta=None):
    if not path:
        sys.stdout.write(text)
        return
    data = text.encode("utf-8") if isinstance(text, str) else text
    try:
        Path(path).write_bytes(data)
        meta = {"command": command, "created_utc": datetime.now(timezone.utc).isoformat(),
                "elapsed_s": round(time.perf_counter() - started, 3), "version": __version__,
                "python": platform.python_version(), "numpy": np.__version__,
                "sha256": hashlib.sha256(data).hexdigest(), **(extra_meta or {})}
        Path(path + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


# --- commands ---------------------------------------------------------------------

def _rule(cfg, dim=3):
    from .sphere import build_circle_rule, build_sphere_rule

    deg = cfg.int("quadrature.degree")
    return build_sphere_rule(deg) if dim == 3 else build_circle_rule(deg)


def _points(cfg, field, count_key="probe.count"):
    text = cfg.str("probe.x")
    if text:
        try:
            pts = [tuple(float(c) for c in p.split(",")) for p in text.split(";") if p.strip()]
        except ValueError:
            raise UsageError(f"probe.x: cannot parse {text!r}") from None
        if any(len(p) != field.dim for p in pts):
            raise UsageError(f"probe.x points must have {field.dim} coordinates")
        return np.array(pts)
    rng = np.random.default_rng(cfg.int("run.seed"))
    n = cfg.int(count_key)
    if field.domain == "periodic_box":
        return rng.uniform(0, field.L, size=(n, field.dim))
    center = np.mean(getattr(field, "centers", np.zeros((1, field.dim))), axis=0)
    return center + rng.uniform(-1.5, 1.5, size=(n, field.dim))


def _reference(cfg, field):
    from .localform import reference_pressure

    pref = cfg.str("probe.reference")
    if pref not in ("spectral", "exact"):
        raise UsageError("probe.reference must be 'spectral' or 'exact'")
    try:
        return reference_pressure(field, cfg.int("grid.N"), prefer=pref)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _probe_rows(cfg, field, points, radii):
    from .localform import CSV_HEADER, reconstruct

    src = _reference(cfg, field)
    rule = _rule(cfg, field.dim)
    order = cfg.int("quadrature.radial_order")
    tol = cfg.float("probe.tol")
    rows, ok = [], True
    for x in points:
        pref = float(src.value(x))
        for r in radii:
            try:
                pr = reconstruct(field, src, x, r, rule, order, p_reference=pref)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            ok &= pr.residual <= tol
            row = pr.row()
            if len(row) < len(CSV_HEADER):  # 2D probes leave x3 blank
                row = row[:2] + [""] + row[2:]
            rows.append(row)
    return CSV_HEADER, rows, ok


def cmd_reconstruct(cfg: RunConfig):
    field = field_from_config(cfg)
    header, rows, ok = _probe_rows(cfg, field, _points(cfg, field), cfg.floats("probe.r"))
    return csv_report("reconstruct", cfg, header, rows), ok


def cmd_scan_r(cfg: RunConfig):
    field = field_from_config(cfg)
    lo, hi, n = cfg.float("scan.r_min"), cfg.float("scan.r_max"), cfg.int("scan.count")
    if not 0 < lo < hi or n < 2:
        raise UsageError("scan needs 0 < r_min < r_max and count >= 2")
    pts = _points(cfg, field)[:1]
    header, rows, ok = _probe_rows(cfg, field, pts, np.geomspace(lo, hi, n))
    return csv_report("scan-r", cfg, header, rows), ok


def cmd_verify_identities(cfg: RunConfig):
    from .fields import exact_pressure, make_field
    from .identities import (grouped_sum_residual, gradpgradu_residual, identity_suite,
                             suite_records, verify_2d_pressure, verify_grad_pressure_chain)
    from .sphere import build_sphere_rule

    deg = cfg.int("identities.degree") if cfg.str("identities.degree") else cfg.int(
        "quadrature.degree")
    x = cfg.floats("identities.x")
    if len(x) != 3:
        raise UsageError("identities.x needs three coordinates")
    try:
        res = identity_suite(x, cfg.float("identities.r"), cfg.float("identities.h"), deg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = suite_records(res)
    extras = []
    if cfg.bool("identities.extras"):
        tg = make_field("taylor_green")
        src = exact_pressure(tg)
        rule = build_sphere_rule(max(deg, 24))
        xp, rp, h = (1.0, 1.0, 1.0), 0.3, 1e-3

        def rec(name, r, params=None):
            extras.append({"id": name, "params": params or {}, "lhs": r.lhs, "rhs": r.rhs,
                           "residual": r.residual, "budget": r.error_budget,
                           "pass": bool(r.passed)})

        rec("grouped_sum", grouped_sum_residual(tg, xp, rp, (0.2, -0.1, 0.3), rule),
            {"f": "taylor_green"})
        rec("grapu", verify_grad_pressure_chain(tg, src, xp, rp, h, rule), {"f": "taylor_green"})
        rec("gradpgradu", gradpgradu_residual(tg, src, xp, rp, h, rule), {"f": "taylor_green"})
        tg2 = make_field("taylor_green_2d")
        rec("p2dv", verify_2d_pressure(tg2, exact_pressure(tg2), (0.4, -0.3), 0.5, (0.1, 0.2)),
            {"f": "taylor_green_2d"})
    ok = all(r["pass"] for r in records + extras)
    body = {"records": records, "extras": extras,
            "summary": {"cases": len(records) + len(extras),
                        "failed": sum(not r["pass"] for r in records + extras)}}
    return json_report("verify-identities", cfg, ok, body), ok


def cmd_bounds_report(cfg: RunConfig):
    from .bounds import CSV_HEADER, bounds_report

    field = field_from_config(cfg)
    seed = cfg.int("run.seed")
    if field.domain == "whole_space_decaying":
        opts = {"rule_degree": max(cfg.int("quadrature.degree"), 24),
                "lattice": cfg.int("bounds.lattice"), "n_random": cfg.int("bounds.random"),
                "refine_evals": cfg.int("bounds.refine")}
    else:
        opts = {"n_probes": cfg.int("bounds.probes"),
                "rule_degree": cfg.int("quadrature.degree")}
    try:
        rep = bounds_report(field, None, cfg.floats("bounds.r"), cfg.floats("bounds.q"),
                            N=cfg.int("grid.N"), seed=seed, **opts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = csv_report("bounds-report", cfg, CSV_HEADER, [c.row() for c in rep.checks])
    text += "".join(f"# notice: {n}\n" for n in rep.notices)
    return text, rep.passed


def cmd_holder_scan(cfg: RunConfig):
    from .bounds import holder_scan

    tol = cfg.float("holder.tol")
    fits, ok = [], True
    for alpha in cfg.floats("holder.alpha"):
        try:
            fit = holder_scan(alpha, cfg.int("run.seed"), cfg.int("holder.pairs"),
                              cfg.int("holder.modes"), cfg.int("holder.bins"), strict=False)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        d = fit.as_dict()
        if alpha == 0.5:
            d["pass"] = None  # logarithmic borderline: reported, not judged
        else:
            d["pass"] = bool(abs(fit.fitted_exponent - fit.target) <= tol)
            ok &= d["pass"]
        fits.append(d)
    return json_report("holder-scan", cfg, ok, {"fits": fits, "tolerance": tol}), ok


def ns_config_from(cfg: RunConfig):
    from .nsmon import CriteriaConfig, NSConfig

    N = cfg.int("ns.N") if cfg.str("ns.N") else cfg.int("grid.N")
    initial = {"kind": cfg.str("ns.initial")}
    if initial["kind"] == cfg.str("field.kind"):
        initial.update({k: _parse_value(v) for k, v in cfg.sections["field"].items()
                        if k != "kind"})
    try:
        crit = CriteriaConfig(cfg.float("ns.U"), cfg.float("ns.gamma"), cfg.float("ns.r"))
        return NSConfig(N=N, L=cfg.float("grid.L"), nu=cfg.float("ns.nu"),
                        dt=cfg.float("ns.dt"), T=cfg.float("ns.T"), initial=initial,
                        A=cfg.optional_float("ns.A"), criteria=crit,
                        sample_every=cfg.int("ns.sample_every"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_ns_run(cfg: RunConfig):
    from .nsmon import BlowUp, criteria_monitor, fgt_report, run

    conf = ns_config_from(cfg)
    traj_path = cfg.str("ns.trajectory")
    snap_path = cfg.str("ns.snapshot")
    _check_writable(traj_path)
    _check_writable(snap_path)
    with_pi = cfg.bool("ns.pi")
    final = {}
    try:
        traj = run(conf, with_pi=with_pi, snapshot_hook=lambda st: final.update(state=st))
    except BlowUp as exc:
        body = {"blowup": str(exc)}
        return json_report("ns-run", cfg, False, body), False
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fgt = fgt_report(traj, conf)
    energy = traj.energy_residual()
    cross = float(max(s.cross_residual for s in traj.samples))
    checks = {
        "energy_identity": energy <= cfg.float("ns.energy_tol"),
        "cross_term_identity": cross <= cfg.float("ns.cross_tol"),
        "fgt_finite": all(v["finite"] for v in fgt["integrals"].values()),
        "gradp_le_unau": fgt["gradp_le_unau"],
    }
    body = {"N": conf.N, "steps": conf.steps, "samples": len(traj.samples),
            "energy_residual_per_time": energy, "cross_residual_max": cross,
            "divergence_max": traj.max_divergence, "fgt": fgt}
    if with_pi:
        crit = criteria_monitor(traj, conf)
        checks["criteria_finite"] = bool(math.isfinite(crit["int_r_minus_gamma"])
                                         and math.isfinite(crit["int_pi_L3_sq"]))
        checks["y_bounded"] = bool(math.isfinite(crit["y_max"]))
        body["criteria"] = crit
    body["checks"] = checks
    ok = all(checks.values())
    if traj_path:
        from .nsmon import TRAJ_HEADER

        rows = [line.split(",") for line in traj.to_csv().splitlines()[1:]]
        try:
            Path(traj_path).write_text(csv_report("ns-run", cfg, TRAJ_HEADER, rows))
        except OSError as exc:
            raise UsageError(f"cannot write {traj_path}: {exc.strerror}") from None
    if snap_path and "state" in final:
        from .spectral import write_grid

        try:
            write_grid(snap_path, final["state"].grid())
        except OSError as exc:
            raise UsageError(f"cannot write {snap_path}: {exc.strerror}") from None
    return json_report("ns-run", cfg, ok, body), ok


def cmd_export_grid(cfg: RunConfig):
    from .spectral import sample, solve_pressure, write_grid

    out = cfg.str("run.out")
    if not out:
        raise UsageError("export-grid needs run.out (or --out) for the binary file")
    field = field_from_config(cfg)
    if field.dim != 3:
        raise UsageError("the grid file format stores 3D fields only")
    what = cfg.str("export.what")
    N = cfg.int("grid.N")
    L = field.L if field.L is not None else cfg.float("grid.L")
    try:
        g = sample(field, N, L)
        if what == "pressure":
            if field.domain != "periodic_box":
                raise UsageError("pressure export needs a periodic field")
            g = solve_pressure(g)
        elif what != "velocity":
            raise UsageError("export.what must be 'velocity' or 'pressure'")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        write_grid(out, g)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from None
    data = Path(out).read_bytes()
    summary = {"path": out, "N": N, "L": float(L), "components": 3 if g.is_vector else 1,
               "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}
    return json_report("export-grid", cfg, True, {"grid": summary}), True


HANDLERS = {
    "verify-identities": cmd_verify_identities,
    "reconstruct": cmd_reconstruct,
    "scan-r": cmd_scan_r,
    "bounds-report": cmd_bounds_report,
    "holder-scan": cmd_holder_scan,
    "ns-run": cmd_ns_run,
    "export-grid": cmd_export_grid,
}


HELP = {
    "verify-identities": "sphere identity suite (JSON)",
    "reconstruct": "beta + pi against the reference pressure at probes (CSV)",
    "scan-r": "reconstruction at one point over a geometric radius list (CSV)",
    "bounds-report": "a priori bounds with measured constants (CSV)",
    "holder-scan": "pressure increment exponent of lacunary fields (JSON)",
    "ns-run": "Navier-Stokes run with bound and criteria monitors (JSON + CSV)",
    "export-grid": "write a velocity or pressure grid in LPGR format",
}


# --- entry points -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locpress", description="Local pressure formulas: batch verification.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", help="key = value config file")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        s.add_argument("--profile", choices=sorted(PROFILES))
        s.add_argument("--out", help="report path (default: stdout)")
        s.add_argument("--seed", type=int)
        s.add_argument("--field", help="field kind (field.kind)")
        if name in ("reconstruct", "scan-r"):
            s.add_argument("--x", help="probe point, comma separated (probe.x)")
        if name == "reconstruct":
            s.add_argument("--r", help="radii, comma separated (probe.r)")
    return p


def run(command: str, config_path=None, overrides=(), profile=None) -> int:
    """Run one command with a config file and overrides; returns the exit code."""
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    cfg = load_config(config_path, overrides, profile)
    out = cfg.str("run.out")
    _check_writable(out)
    started = time.perf_counter()
    text, ok = HANDLERS[command](cfg)
    if command != "export-grid":
        _emit(text, out, command, started)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["run"]:
        argv = argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = list(args.set)
        for flag, key in (("seed", "run.seed"), ("out", "run.out"), ("field", "field.kind"),
                          ("x", "probe.x"), ("r", "probe.r")):
            val = getattr(args, flag, None)
            if val is not None:
                overrides.append(f"{key}={val}")
        return run(args.command, args.config, overrides, args.profile)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        if "usage:" not in str(exc):
            print(parser.format_usage(), file=sys.stderr, end="")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Pseudo-spectral Navier-Stokes on the periodic box, with bound monitors.

The stepper is a dealiased (2/3 rule) Galerkin scheme in the divergence
form ``d_t u = -P d_j(u_j u) + nu lap u`` advanced by fourth-order
Runge-Kutta in the integrating-factor (Lawson) variables, so the viscous
part is exact.  Every stage is Leray-projected.

Diagnostics that involve products are evaluated on a ``3N/2`` grid, on
which the products of the dealiased state are represented exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field as dc_field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy.integrate import simpson, trapezoid

from .fields import make_field
from .localform import pi_grid
from .spectral import SpectralGrid, sample, workers


class BlowUp(FloatingPointError):
    """Non-finite state or CFL violation."""


@dataclass(frozen=True)
class CriteriaConfig:
    """Hypotheses of the regularity criteria.  ``r`` is a constant or ``t -> r``."""

    U: float = 0.5
    gamma: float = 5.0
    r: float | Callable[[float], float] = 0.2
    R: float | None = None
    pad: int = 2

    def __post_init__(self):
        if not self.gamma > 4:
            raise ValueError("gamma must exceed 4")
        if self.U <= 0:
            raise ValueError("U must be positive")

    def radius(self, t: float) -> float:
        return float(self.r(t)) if callable(self.r) else float(self.r)


@dataclass(frozen=True)
class NSConfig:
    N: int = 32
    L: float = 2 * np.pi
    nu: float = 0.1
    dt: float = 1e-3
    T: float = 2.0
    initial: dict = dc_field(default_factory=lambda: {"kind": "taylor_green"})
    A: float | None = None
    criteria: CriteriaConfig | None = dc_field(default_factory=CriteriaConfig)
    sample_every: int = 50
    cfl_max: float = 0.5

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.N < 8 or self.N % 2:
            raise ValueError("N must be even and at least 8")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def A_value(self) -> float:
        return self.A if self.A is not None else self.nu**1.5 / math.sqrt(self.T)


@dataclass(frozen=True)
class NSState:
    t: float
    step: int
    uhat: np.ndarray  # rfftn coefficients, shape (3, N, N, N//2 + 1)
    L: float = 2 * np.pi

    @property
    def N(self) -> int:
        return self.uhat.shape[1]

    def grid(self) -> SpectralGrid:
        return SpectralGrid(_irfft(self.uhat, self.N), self.L, 3)


# --- spectral machinery ---------------------------------------------------------

def _rfft(a):
    return sfft.rfftn(a, axes=(-3, -2, -1), workers=workers())


def _irfft(a, N):
    return sfft.irfftn(a, s=(N, N, N), axes=(-3, -2, -1), workers=workers())


@dataclass(frozen=True)
class _Ops:
    k: tuple
    k2: np.ndarray
    inv_k2: np.ndarray
    mask: np.ndarray
    weight: np.ndarray  # rfft half-spectrum multiplicity for Parseval


@lru_cache(maxsize=16)
def _ops(N: int, L: float) -> _Ops:
    s = 2 * np.pi / L
    kf = np.fft.fftfreq(N, 1.0 / N)
    kr = np.fft.rfftfreq(N, 1.0 / N)
    kx, ky, kz = np.meshgrid(kf * s, kf * s, kr * s, indexing="ij", sparse=True)
    k2 = kx * kx + ky * ky + kz * kz
    with np.errstate(divide="ignore"):
        inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    cut = N / 3.0
    mask = ((np.abs(kf) < cut)[:, None, None] & (np.abs(kf) < cut)[None, :, None]
            & (np.abs(kr) < cut)[None, None, :])
    w = np.full(kr.shape, 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    return _Ops((kx, ky, kz), k2, inv, mask, np.broadcast_to(w[None, None, :], mask.shape))


def _project(vh, ops: _Ops):
    kx, ky, kz = ops.k
    kdot = (kx * vh[0] + ky * vh[1] + kz * vh[2]) * ops.inv_k2
    return np.stack([vh[0] - kx * kdot, vh[1] - ky * kdot, vh[2] - kz * kdot])


_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _nonlinear(uh, ops: _Ops, N: int):
    """``-mask P d_j(u_j u)`` and ``max |u|``."""
    u = _irfft(uh, N)
    ph = _rfft(np.stack([u[i] * u[j] for i, j in _PAIRS]))
    kx, ky, kz = ops.k
    xx, yy, zz, xy, xz, yz = ph
    div = np.stack([1j * (kx * xx + ky * xy + kz * xz),
                    1j * (kx * xy + ky * yy + kz * yz),
                    1j * (kx * xz + ky * yz + kz * zz)])
    out = -_project(div, ops) * ops.mask
    umax = float(np.sqrt(np.max(np.einsum("ixyz,ixyz->xyz", u, u))))
    return out, umax


def l2sq(vh, ops: _Ops, N: int, L: float) -> float:
    """``|v|_{L^2}^2`` from rfft coefficients (Parseval)."""
    return float(np.sum(ops.weight * np.abs(vh) ** 2) * L**3 / N**6)


def _pad_rfft(vh, N: int, M: int):
    """Zero-pad rfft coefficients of an ``N`` grid to an ``M`` grid (scaled for irfft)."""
    out = np.zeros(vh.shape[:-3] + (M, M, M // 2 + 1), dtype=complex)
    h = N // 2
    idx = np.r_[0:h, M - h:M]
    src = np.r_[0:h, N - h:N]
    out[..., idx[:, None, None], idx[None, :, None], np.arange(h)[None, None, :]] = \
        vh[..., src[:, None, None], src[None, :, None], np.arange(h)[None, None, :]]
    return out * (M / N) ** 3


def initial_state(config: NSConfig) -> NSState:
    spec = dict(config.initial)
    kind = spec.pop("kind")
    f = make_field(kind, spec)
    if f.domain != "periodic_box" or f.dim != 3:
        raise ValueError(f"initial field {kind!r} is not a 3D periodic field")
    if abs(f.L - config.L) > 1e-12:
        raise ValueError("initial field period differs from the box length")
    ops = _ops(config.N, float(config.L))
    uh = _rfft(sample(f, config.N).values)
    uh = _project(uh, ops) * ops.mask
    return NSState(0.0, 0, uh, config.L)


def zero_state(config: NSConfig) -> NSState:
    N = config.N
    return NSState(0.0, 0, np.zeros((3, N, N, N // 2 + 1), dtype=complex), config.L)


def state_from_field(f, config: NSConfig) -> NSState:
    ops = _ops(config.N, float(config.L))
    uh = _project(_rfft(sample(f, config.N).values), ops) * ops.mask
    return NSState(0.0, 0, uh, config.L)


def ns_step(state: NSState, config: NSConfig) -> NSState:
    """One Lawson-RK4 step of size ``config.dt``."""
    N, dt = state.N, config.dt
    ops = _ops(N, float(state.L))
    if not np.all(np.isfinite(state.uhat)):
        raise BlowUp(f"non-finite state at t={state.t:.6g}")
    E = np.exp(-config.nu * ops.k2 * dt)
    E2 = np.exp(-config.nu * ops.k2 * dt / 2)
    u0 = state.uhat
    k1, umax = _nonlinear(u0, ops, N)
    cfl = umax * dt * N / state.L
    if cfl > config.cfl_max:
        raise BlowUp(f"CFL number {cfl:.3g} exceeds {config.cfl_max} at t={state.t:.6g}")
    k2, _ = _nonlinear(E2 * (u0 + 0.5 * dt * k1), ops, N)
    k3, _ = _nonlinear(E2 * u0 + 0.5 * dt * k2, ops, N)
    k4, _ = _nonlinear(E * u0 + dt * E2 * k3, ops, N)
    new = E * u0 + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)
    new = _project(new, ops) * ops.mask
    if not np.all(np.isfinite(new)):
        raise BlowUp(f"non-finite state after step {state.step + 1} (t={state.t + dt:.6g}); reduce dt")
    return NSState(state.t + dt, state.step + 1, new, state.L)


def divergence_defect(state: NSState) -> float:
    """``max |k . u^(k)| / max |u^(k)|``."""
    ops = _ops(state.N, float(state.L))
    kdot = sum(ops.k[i] * state.uhat[i] for i in range(3))
    m = np.abs(state.uhat).max()
    return float(np.abs(kdot).max() / m) if m > 0 else 0.0


# --- per-sample diagnostics --------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    t: float
    E: float
    y: float
    lap: float
    dtu: float
    uinf: float
    unau: float
    gradp: float
    uL3: float
    uL2: float
    piL3: float = math.nan
    cond_lhs: float = math.nan
    cond_rhs: float = math.nan
    r: float = math.nan
    cross_residual: float = math.nan


def _fields(state: NSState):
    """Physical fields on the ``3N/2`` grid: u, grad u, a = u . grad u, and grad p."""
    N, L = state.N, state.L
    M = 3 * N // 2
    ops = _ops(N, float(L))
    uh = state.uhat
    up = _irfft(_pad_rfft(uh, N, M), M)
    gh = np.stack([np.stack([1j * ops.k[j] * uh[i] for j in range(3)]) for i in range(3)])
    gp = _irfft(_pad_rfft(gh, N, M), M)
    a = np.einsum("jxyz,ijxyz->ixyz", up, gp)
    opsM = _ops(M, float(L))
    ah = _rfft(a)
    # -lap p = div a, so grad p is minus the gradient part of a
    kdot = sum(opsM.k[i] * ah[i] for i in range(3))
    gradp = _irfft(np.stack([-opsM.k[i] * kdot * opsM.inv_k2 for i in range(3)]), M)
    return up, gp, a, gradp, M


def _cross(a, gradp, dv):
    s = float(np.sum((a + gradp) ** 2) * dv)
    a2 = float(np.sum(a * a) * dv)
    p2 = float(np.sum(gradp * gradp) * dv)
    return abs(s - (a2 - p2)), a2, p2


def cross_term_identity(state: NSState) -> tuple[float, float]:
    """``int |a + grad p|^2 - (|a|^2 - |grad p|^2)`` with ``a = u . grad u``.

    Returns ``(residual, |a|^2)``; the identity is exact, so the relative
    residual is a round-off-level solver self-test.
    """
    _, _, a, gradp, M = _fields(state)
    res, a2, _ = _cross(a, gradp, (state.L / M) ** 3)
    return res, a2


def snapshot(state: NSState, config: NSConfig, with_pi: bool = True) -> Snapshot:
    N, L, nu = state.N, state.L, config.nu
    ops = _ops(N, float(L))
    uh = state.uhat
    up, gp, a, gradp, M = _fields(state)
    dvM = (L / M) ** 3
    E = 0.5 * l2sq(uh, ops, N, L)
    y = l2sq(np.stack([1j * ops.k[j] * uh[i] for i in range(3) for j in range(3)]), ops, N, L)
    lap = math.sqrt(l2sq(ops.k2 * uh, ops, N, L))
    # d_t u as the evaluated right side of the semi-discrete system
    dtu = math.sqrt(l2sq(_nonlinear(uh, ops, N)[0] - nu * ops.k2 * uh, ops, N, L))
    umag = np.sqrt(np.sum(up * up, axis=0))
    res, a2, p2 = _cross(a, gradp, dvM)
    cross = res / a2 if a2 > 0 else res
    snap = dict(t=state.t, E=E, y=y, lap=lap, dtu=dtu, uinf=float(umag.max()),
                unau=math.sqrt(a2), gradp=math.sqrt(p2),
                uL3=float((np.sum(umag**3) * dvM) ** (1 / 3)), uL2=math.sqrt(2 * E),
                cross_residual=cross)
    crit = config.criteria
    if with_pi and crit is not None:
        r = crit.radius(state.t)
        if not 0 < r or 2 * r > L / 4:
            raise ValueError(f"radius schedule gives r={r:.4g}; need 0 < 2r <= L/4")
        if crit.R is not None and r > crit.R:
            raise ValueError(f"r(t)={r:.4g} exceeds R={crit.R}")
        g = SpectralGrid(_irfft(uh, N), L, 3)
        pi = pi_grid(g, r, crit.pad)
        P = pi.N
        uP = _irfft(_pad_rfft(uh, N, P), P)
        ghP = np.stack([np.stack([1j * ops.k[j] * uh[i] for j in range(3)]) for i in range(3)])
        gP = _irfft(_pad_rfft(ghP, N, P), P)
        dvP = (L / P) ** 3
        mag = np.sqrt(np.sum(uP * uP, axis=0))
        grad2 = np.sum(gP * gP, axis=(0, 1))
        big = mag >= crit.U
        snap.update(
            piL3=float((np.sum(np.abs(pi.values) ** 3) * dvP) ** (1 / 3)),
            cond_lhs=float(np.sum((mag * pi.values**2)[big]) * dvP),
            cond_rhs=float(nu**2 / 4 * np.sum(mag * grad2) * dvP),
            r=r,
        )
    return Snapshot(**snap)


# --- trajectories --------------------------------------------------------------------

TRAJ_HEADER = ["t", "E", "y", "lap_L2", "dtu_L2", "u_Linf", "unau_L2", "gradp_L2",
               "u_L3", "pi_L3", "cond_lhs", "cond_rhs"]


@dataclass
class NSTrajectory:
    config: NSConfig
    step_t: np.ndarray
    step_E: np.ndarray
    step_y: np.ndarray
    samples: list[Snapshot]
    max_divergence: float = 0.0

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def times(self) -> np.ndarray:
        return self.series("t")

    def energy_residual(self) -> float:
        """``max |E(t) - E(0) + nu int_0^t y| / (E(0) t)`` over the steps (Simpson)."""
        t, E, y = self.step_t, self.step_E, self.step_y
        E0 = E[0]
        if E0 == 0:
            return float(np.abs(E).max())
        worst = 0.0
        nu = self.config.nu
        for m in range(2, len(t), 2):
            diss = simpson(y[: m + 1], x=t[: m + 1])
            worst = max(worst, abs(E[m] - E0 + nu * diss) / (E0 * t[m]))
        return worst

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for s in self.samples:
            w.writerow([repr(float(v)) for v in (s.t, s.E, s.y, s.lap, s.dtu, s.uinf, s.unau,
                                                   s.gradp, s.uL3, s.piL3, s.cond_lhs, s.cond_rhs)])
        return buf.getvalue()


def run(config: NSConfig, state: NSState | None = None, with_pi: bool | None = None,
        snapshot_hook: Callable[[NSState], None] | None = None) -> NSTrajectory:
    """Integrate to ``T``; full diagnostics every ``sample_every`` steps."""
    state = state or initial_state(config)
    if with_pi is None:
        with_pi = config.criteria is not None
    ops = _ops(state.N, float(state.L))
    n = config.steps
    ts, Es, ys = [], [], []
    samples = []
    maxdiv = 0.0

    def record(st):
        ts.append(st.t)
        Es.append(0.5 * l2sq(st.uhat, ops, st.N, st.L))
        ys.append(float(np.sum(ops.weight * ops.k2 * np.sum(np.abs(st.uhat) ** 2, axis=0))
                        * st.L**3 / st.N**6))

    record(state)
    samples.append(snapshot(state, config, with_pi))
    for i in range(n):
        state = ns_step(state, config)
        record(state)
        if (i + 1) % config.sample_every == 0 or i + 1 == n:
            maxdiv = max(maxdiv, divergence_defect(state))
            samples.append(snapshot(state, config, with_pi))
            if snapshot_hook is not None:
                snapshot_hook(state)
    return NSTrajectory(config, np.array(ts), np.array(Es), np.array(ys), samples, maxdiv)


# --- reports --------------------------------------------------------------------------

FGT_NAMES = ("deltin", "patin", "intufty", "unau", "nap", "deltau", "ut")


def fgt_report(traj: NSTrajectory, config: NSConfig | None = None) -> dict:
    """Time integrals of the a priori bounds and their budgets (``C = 1``).

    ``D = |u_0|^2 / nu``; budgets use the configured ``A``.  Returned per
    integral: ``value``, ``budget``, ``ratio`` and ``finite``.
    """
    config = config or traj.config
    nu, T, A = config.nu, traj.times[-1] if len(traj.times) else 0.0, config.A_value
    t = traj.times
    u0sq = traj.samples[0].uL2 ** 2
    D = u0sq / nu
    y = traj.series("y")
    b1 = D + nu**3 / A  # D + nu^3 A^{-1}
    b2 = D + A * T  # D + A T
    mix = b1 ** (1 / 3) * b2 ** (2 / 3)
    K = D + math.sqrt(T) * nu**1.5

    def integral(v):
        return float(trapezoid(v, t)) if len(t) > 1 else 0.0

    vals = {
        "deltin": integral(traj.series("lap") ** (2 / 3)),
        "patin": integral(traj.series("dtu") ** (2 / 3)),
        "intufty": integral(traj.series("uinf")),
        "unau": integral(traj.series("unau") ** (2 / 3)),
        "nap": integral(traj.series("gradp") ** (2 / 3)),
        "deltau": integral(traj.series("lap") ** 2 / (A + y) ** 2),
        "ut": integral(traj.series("dtu") ** 2 / (A + y) ** 2),
    }
    budgets = {
        "deltin": nu ** (-4 / 3) * mix,
        "patin": nu ** (-2 / 3) * mix,
        "intufty": nu**-1 * K**0.75 * D**0.25,
        "unau": nu ** (-2 / 3) * math.sqrt(K * D),
        "nap": nu ** (-2 / 3) * math.sqrt(K * D),
        "deltau": nu**-4 * b1,
        "ut": nu**-2 * b1,
    }
    out = {"A": A, "D": D, "T": T, "budget_D_plus_nu3_over_A": b1, "budget_D_plus_AT": b2,
           "integrals": {}}
    for k in FGT_NAMES:
        v, b = vals[k], budgets[k]
        out["integrals"][k] = {"value": v, "budget": b,
                               "ratio": v / b if b > 0 else (0.0 if v == 0 else math.inf),
                               "finite": bool(np.isfinite(v))}
    unau, gradp = traj.series("unau"), traj.series("gradp")
    out["gradp_le_unau"] = bool(np.all(gradp <= unau * (1 + 1e-12) + 1e-300))
    uinf = traj.series("uinf")
    den = np.sqrt(traj.series("y")) * traj.series("lap")
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, uinf**2 / np.where(den > 0, den, 1.0), 0.0)
    out["ufty_max"] = float(r.max()) if len(r) else 0.0
    return out


def criteria_monitor(traj: NSTrajectory, config: NSConfig | None = None) -> dict:
    """Hypothesis accumulators of the regularity criteria along a run.

    Both sides of the level-set condition are logged per sample.  The
    ODE coefficients ``C_1..C_4`` use ``C = 1`` and are shape only.
    """
    config = config or traj.config
    crit = config.criteria
    if crit is None:
        raise ValueError("criteria monitoring needs a criteria configuration")
    nu = config.nu
    t = traj.times
    r = traj.series("r")
    if np.any(~np.isfinite(r)):
        raise ValueError("trajectory was run without pi diagnostics")
    a = crit.gamma / (crit.gamma - 2)
    y2 = traj.series("y")
    pi3 = traj.series("piL3")
    uL2 = traj.series("uL2")
    lhs, rhs = traj.series("cond_lhs"), traj.series("cond_rhs")
    C1 = crit.U**2 * r * y2
    C2 = crit.U * y2
    gnorm = np.sqrt(y2)
    C3 = r ** (-2 * a) * gnorm ** (4 - 2 * a) * uL2 ** (2 * a) / nu
    C4 = pi3**2 / nu

    def integral(v):
        return float(trapezoid(v, t)) if len(t) > 1 else 0.0

    yL3 = traj.series("uL3")
    return {
        "gamma": crit.gamma, "U": crit.U, "a": a,
        "int_r_minus_gamma": integral(r ** (-crit.gamma)),
        "int_pi_L3_sq": integral(pi3**2),
        "cond": [{"t": float(tt), "lhs": float(l), "rhs": float(rr), "holds": bool(l <= rr)}
                 for tt, l, rr in zip(t, lhs, rhs)],
        "cond_held_all": bool(np.all(lhs <= rhs)),
        "y_max": float(yL3.max()) if len(yL3) else 0.0,
        "y_final": float(yL3[-1]) if len(yL3) else 0.0,
        "C_integrals_shape_only": {"C1": integral(C1), "C2": integral(C2),
                                   "C3": integral(C3), "C4": integral(C4)},
    }


def with_overrides(config: NSConfig, **kw) -> NSConfig:
    return replace(config, **kw)

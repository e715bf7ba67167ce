"""Local pressure formulas: sphere averages, ``b``, ``beta``, ``pi`` and the
representation ``p(x) = beta(x, r) + pi(x, r)``.

Every singular integral is written in increment form, ``du = u(x + z) -
u(x)``, and evaluated as a radial integral of sphere averages, e.g.

    (1/4 pi) int_{|z|<R} w(|z|/r) sigma_ij(z^) |z|^-3 du_i du_j dz
        = int_0^R w(rho/r) Q(rho) d rho / rho,
    Q(rho) = avg_{|xi|=1} sigma_ij(xi) du_i du_j (x + rho xi).

``Q`` is O(rho^2) for Lipschitz ``u``, so the open Gauss rules never see a
singularity.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .fields import PERIODIC, VelocityField, exact_pressure
from .pressure import PressureSource, SeriesPressure, ZeroPressure
from .sphere import (
    SphereRule,
    build_radial_grid,
    build_sphere_rule,
    geometric_radial_grid,
    weight,
)

DEFAULT_DEGREE = 16
DEFAULT_ORDER = 24


class RadiusTooLarge(ValueError):
    """The requested ball does not fit the periodic box without overlap."""


@dataclass(frozen=True)
class LocalProbe:
    x: tuple
    r: float
    pbar: float
    b: float
    beta: float
    pi: float
    p_reference: float
    residual: float

    def row(self) -> list:
        return [*self.x, self.r, self.pbar, self.b, self.beta, self.pi,
                self.p_reference, self.residual]

    def as_dict(self) -> dict:
        return asdict(self)


CSV_HEADER = ["x1", "x2", "x3", "r", "pbar", "b", "beta", "pi", "p_ref", "residual"]


def _check_radius(period, r: float, reach: float, what: str):
    if r <= 0:
        raise ValueError(f"{what}: radius must be positive, got {r}")
    if period is not None and reach * r > period / 4 + 1e-12:
        raise RadiusTooLarge(
            f"{what}: radius {r} too large for box length {period} "
            f"(need {reach:g} r <= L/4)")


def _period(field=None, src=None):
    if field is not None and getattr(field, "domain", None) == PERIODIC:
        return field.L
    return getattr(src, "period", None)


def _rule(rule, dim=3) -> SphereRule:
    return rule if rule is not None else build_sphere_rule(DEFAULT_DEGREE, dim)


def _increments(field, x, radii, rule):
    """``xi``-resolved increments ``du`` at ``x + rho xi``, shape ``(nr, K, d)``."""
    x = np.asarray(x, dtype=float)
    pts = x + np.asarray(radii)[:, None, None] * rule.nodes[None]
    return field.velocity(pts) - field.velocity(x)


def _S2(field, x, radii, rule, shift=None):
    """``avg (xi . (u - v))^2`` at each radius; ``shift`` is ``u(x) - v``."""
    du = _increments(field, x, radii, rule)
    if shift is not None:
        du = du + shift
    proj = np.einsum("rkd,kd->rk", du, rule.nodes)
    return proj**2 @ rule.weights


def _Q(field, x, radii, rule, shift=None):
    """``avg sigma_ij w_i w_j`` with ``w = du + shift``, in increment form.

    ``d = dim`` sets the trace-free kernel ``d xi xi - I``.  The constant
    part ``avg sigma_ij shift_i shift_j`` vanishes identically and is
    dropped, so the integrand stays O(rho) for any ``shift``.
    """
    d = rule.dim
    du = _increments(field, x, radii, rule)
    proj = np.einsum("rkd,kd->rk", du, rule.nodes)
    q = (d * proj**2 - np.sum(du * du, axis=-1)) @ rule.weights
    if shift is not None:
        shift = np.asarray(shift, dtype=float)
        cross = d * proj * (rule.nodes @ shift)[None] - du @ shift
        q = q + 2.0 * (cross @ rule.weights)
    return q


# --- the local quantities ---------------------------------------------------

def pbar(src: PressureSource, x, r: float, rule: SphereRule | None = None) -> float:
    """Sphere average of the pressure."""
    _check_radius(_period(src=src), r, 1.0, "pbar")
    return src.pbar(x, r, _rule(rule))


def b_value(field: VelocityField, src: PressureSource, x, r: float,
            rule: SphereRule | None = None, v=None) -> float:
    """``pbar + avg (xi . (u - v))^2`` (``v = 0`` by default)."""
    rule = _rule(rule, field.dim)
    _check_radius(_period(field, src), r, 1.0, "b_value")
    x = np.asarray(x, dtype=float)
    pts = x + r * rule.nodes
    u = field.velocity(pts)
    if v is not None:
        u = u - np.asarray(v, dtype=float)
    proj = np.einsum("kd,kd->k", u, rule.nodes)
    return float(src.pbar(x, r, rule) + rule.weights @ proj**2)


def beta_value(src: PressureSource, x, r: float, rule: SphereRule | None = None,
               radial_order: int = DEFAULT_ORDER) -> float:
    """``(1/r) int_r^{2r} pbar(x, rho) d rho``."""
    _check_radius(_period(src=src), r, 2.0, "beta_value")
    if hasattr(src, "beta"):
        return float(src.beta(x, r))
    grid = build_radial_grid(r, 2 * r, radial_order)
    vals = src.pbar_many(x, grid.nodes, _rule(rule))
    return float(grid.weights @ vals / r)


def pi_value(field: VelocityField, x, r: float, rule: SphereRule | None = None,
             radial_order: int = DEFAULT_ORDER) -> float:
    """Increment part of the pressure: annulus term plus weighted kernel term."""
    rule = _rule(rule, field.dim)
    _check_radius(_period(field), r, 2.0, "pi_value")
    if rule.dim != 3:
        raise ValueError("pi_value is the three-dimensional formula")
    ann = build_radial_grid(r, 2 * r, radial_order)
    first = ann.weights @ _S2(field, x, ann.nodes, rule) / r
    ball = build_radial_grid(0.0, 2 * r, radial_order, (r,))
    w = weight(ball.nodes / r)
    second = ball.weights @ (w * _Q(field, x, ball.nodes, rule) / ball.nodes)
    return float(first + second)


def reconstruct(field: VelocityField, src: PressureSource, x, r: float,
                rule: SphereRule | None = None, radial_order: int = DEFAULT_ORDER,
                p_reference: float | None = None) -> LocalProbe:
    """All local quantities at ``(x, r)`` and the residual of ``beta + pi = p``."""
    rule = _rule(rule, field.dim)
    x = np.asarray(x, dtype=float)
    pb = pbar(src, x, r, rule)
    bb = b_value(field, src, x, r, rule)
    be = beta_value(src, x, r, rule, radial_order)
    pi = pi_value(field, x, r, rule, radial_order)
    pref = float(src.value(x)) if p_reference is None else float(p_reference)
    return LocalProbe(tuple(float(c) for c in x), float(r), float(pb), float(bb),
                      float(be), float(pi), pref, abs(be + pi - pref))


def pv_formula(field: VelocityField, src: PressureSource, x, r: float, v,
               rule: SphereRule | None = None, shells: int = 16, order: int = 8) -> float:
    """Right side minus left side of the representation with reference vector ``v``.

    Works in two and three dimensions; the factor ``1/d`` and the kernel
    ``d xi xi - I`` follow the dimension of the rule.
    """
    rule = _rule(rule, field.dim)
    _check_radius(_period(field, src), r, 1.0, "pv_formula")
    d = rule.dim
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ux = field.velocity(x)
    shift = ux - v
    lhs = float(src.value(x)) + float(shift @ shift) / d
    sphere = float(src.pbar(x, r, rule) + _S2(field, x, [r], rule, shift)[0])
    grid = geometric_radial_grid(r, shells, order)
    integral = float(grid.weights @ (_Q(field, x, grid.nodes, rule, shift) / grid.nodes))
    return sphere + integral - lhs


def b_ode_residual(field: VelocityField, src: PressureSource, x, r: float, h: float,
                   rule: SphereRule | None = None, v=None) -> float:
    """``|d_r b - rhs|`` with a central difference in ``r``.

    ``rhs = -(1/r) avg [3 (xi . w)^2 - |w|^2]`` with ``w = u - v``; for
    ``v = 0`` this is ``(1/r) avg(|u|^2 - 3 (xi . u)^2)``.
    """
    rule = _rule(rule, field.dim)
    if not 0 < h < r:
        raise ValueError("need 0 < h < r")
    _check_radius(_period(field, src), r + h, 1.0, "b_ode_residual")
    x = np.asarray(x, dtype=float)
    vv = np.zeros(field.dim) if v is None else np.asarray(v, dtype=float)
    lhs = (b_value(field, src, x, r + h, rule, vv) - b_value(field, src, x, r - h, rule, vv)) / (2 * h)
    pts = x + r * rule.nodes
    w = field.velocity(pts) - vv
    proj = np.einsum("kd,kd->k", w, rule.nodes)
    d = rule.dim
    rhs = -float(rule.weights @ (d * proj**2 - np.sum(w * w, axis=-1))) / r
    return abs(lhs - rhs)


def usig_residual(field: VelocityField, x, r: float, rule: SphereRule | None = None,
                  shells: int = 16, order: int = 8) -> np.ndarray:
    """Residual vector of ``avg xi_i (xi . u) + PV term - u_i(x)/3``.

    The principal value is realized by subtracting ``u(x)``: sphere
    averages of ``sigma`` vanish, so the increment integral equals it.
    """
    rule = _rule(rule, field.dim)
    _check_radius(_period(field), r, 1.0, "usig_residual")
    x = np.asarray(x, dtype=float)
    ux = field.velocity(x)
    ur = field.velocity(x + r * rule.nodes)
    proj = np.einsum("kd,kd->k", ur, rule.nodes)
    sphere = (rule.nodes * proj[:, None]).T @ rule.weights
    grid = geometric_radial_grid(r, shells, order)
    du = _increments(field, x, grid.nodes, rule)
    # sigma_ij du_j = 3 xi_i (xi . du) - du_i
    sdu = 3 * rule.nodes[None] * np.einsum("rkd,kd->rk", du, rule.nodes)[..., None] - du
    avg = np.einsum("rkd,k->rd", sdu, rule.weights)
    pv = grid.weights @ (avg / grid.nodes[:, None])
    return sphere + pv - ux / 3.0


# --- whole-space representations ---------------------------------------------

def _whole_space_grid(lo: float, hi: float, piece: float, order: int, breaks=()):
    n = max(1, int(np.ceil((hi - lo) / piece)))
    edges = list(lo + (hi - lo) * np.arange(1, n) / n) + [b for b in breaks if lo < b < hi]
    return build_radial_grid(lo, hi, order, edges)


def _require_decay(field, what):
    if getattr(field, "domain", None) != "whole_space_decaying":
        raise ValueError(f"{what} needs a whole_space_decaying field, got {field.domain}")


@dataclass(frozen=True)
class TruncatedIntegral:
    value: float
    tail: float
    R_max: float


def pdiff_whole_space(field, x, R_max: float = 12.0, rule: SphereRule | None = None,
                      order: int = 16, piece: float = 0.5) -> TruncatedIntegral:
    """``|u(x)|^2/3 + (1/4 pi) int_{|z|<R} sigma |z|^-3 du du dz``.

    ``tail`` is the same integrand integrated over ``R < |z| < 2R``, an
    a-posteriori size of what the truncation leaves out.
    """
    _require_decay(field, "pdiff_whole_space")
    rule = rule or build_sphere_rule(40)
    x = np.asarray(x, dtype=float)
    ux = field.velocity(x)
    near = geometric_radial_grid(min(1.0, R_max), 12, 8)
    val = near.weights @ (_Q(field, x, near.nodes, rule) / near.nodes)
    if R_max > 1.0:
        far = _whole_space_grid(1.0, R_max, piece, order)
        val += far.weights @ (_Q(field, x, far.nodes, rule) / far.nodes)
    tail_grid = _whole_space_grid(R_max, 2 * R_max, 2 * piece, order)
    tail = tail_grid.weights @ (_Q(field, x, tail_grid.nodes, rule) / tail_grid.nodes)
    return TruncatedIntegral(float(ux @ ux / 3.0 + val), float(abs(tail)), float(R_max))


def _sigma_uu(field, x, radii, rule):
    pts = np.asarray(x, dtype=float) + np.asarray(radii)[:, None, None] * rule.nodes[None]
    u = field.velocity(pts)
    proj = np.einsum("rkd,kd->rk", u, rule.nodes)
    return (3 * proj**2 - np.sum(u * u, axis=-1)) @ rule.weights


def puij_whole_space(field, x, R_max: float = 12.0, rule: SphereRule | None = None,
                     order: int = 16, piece: float = 0.5) -> TruncatedIntegral:
    """``p(x)`` from ``(1/4 pi) PV int sigma |z|^-3 (u_i u_j)(x+z) dz - |u(x)|^2/3``.

    The principal value needs no subtraction: the sphere rule integrates
    ``sigma`` times the constant and linear Taylor terms to zero exactly.
    """
    _require_decay(field, "puij_whole_space")
    rule = rule or build_sphere_rule(40)
    x = np.asarray(x, dtype=float)
    ux = field.velocity(x)
    near = geometric_radial_grid(min(1.0, R_max), 12, 8)
    val = near.weights @ (_sigma_uu(field, x, near.nodes, rule) / near.nodes)
    if R_max > 1.0:
        far = _whole_space_grid(1.0, R_max, piece, order)
        val += far.weights @ (_sigma_uu(field, x, far.nodes, rule) / far.nodes)
    tail_grid = _whole_space_grid(R_max, 2 * R_max, 2 * piece, order)
    tail = tail_grid.weights @ (_sigma_uu(field, x, tail_grid.nodes, rule) / tail_grid.nodes)
    return TruncatedIntegral(float(val - ux @ ux / 3.0), float(abs(tail)), float(R_max))


def b_exterior(field, x, r: float, R_max: float = 12.0, rule: SphereRule | None = None,
               order: int = 16, piece: float = 0.5) -> TruncatedIntegral:
    """``b(x, r)`` as the exterior integral ``int_r^R avg(sigma u u) d rho / rho``.

    This is ``(1/4 pi) int_{|z| >= r} sigma_ij(z^) |z|^-3 u_i u_j dz`` with a
    plus sign, which is what integrating the radial ODE for ``b`` from ``r``
    to infinity gives.
    """
    _require_decay(field, "b_exterior")
    rule = rule or build_sphere_rule(40)
    grid = _whole_space_grid(r, max(R_max, r * 1.5), piece, order)
    val = grid.weights @ (_sigma_uu(field, x, grid.nodes, rule) / grid.nodes)
    tail_grid = _whole_space_grid(R_max, 2 * R_max, 2 * piece, order)
    tail = tail_grid.weights @ (_sigma_uu(field, x, tail_grid.nodes, rule) / tail_grid.nodes)
    return TruncatedIntegral(float(val), float(abs(tail)), float(R_max))


# --- reference pressures ----------------------------------------------------------

def reference_pressure(field: VelocityField, N: int = 64, prefer: str = "spectral",
                       **newton) -> PressureSource:
    """A pressure source for ``field``.

    Periodic fields use the spectral solve at ``N`` (or the closed form when
    ``prefer="exact"`` and one exists); decaying fields use the Newtonian
    potential; fields with a known zero pressure use that.
    """
    from .spectral import sample, solve_pressure
    from .wholespace import NewtonianPressure

    if prefer not in ("spectral", "exact"):
        raise ValueError(f"prefer must be 'spectral' or 'exact', got {prefer!r}")
    exact = exact_pressure(field)
    if prefer == "exact" and exact is not None:
        return exact
    if field.domain == PERIODIC:
        p = solve_pressure(sample(field, N))
        return SeriesPressure(p.to_series(), name=f"spectral_N{N}", period=field.L)
    if field.domain == "whole_space_decaying":
        return NewtonianPressure(field, **newton)
    if exact is not None:
        return exact
    return ZeroPressure() if field.kind == "constant" else _no_reference(field)


def _no_reference(field):
    raise ValueError(f"no reference pressure available for {field.kind}")


# --- whole-grid fields on the periodic box ------------------------------------------

def pi_kernel_symbol(kappa: np.ndarray, r: float, order: int = 48):
    """Fourier symbol ``a(|k|) delta_ij + c(|k|) k^_i k^_j`` of the ``pi`` kernel.

    The kernel is ``1_{r<=|z|<=2r} z^_i z^_j / (4 pi r |z|^2)`` plus
    ``w(|z|/r) sigma_ij(z^) / (4 pi |z|^3)``; sphere averages of plane
    waves reduce both parts to radial integrals of spherical Bessel
    functions.  At ``k = 0`` the symbol is ``delta_ij / 3``.
    """
    from scipy.special import spherical_jn

    kappa = np.asarray(kappa, dtype=float)
    kmax = float(kappa.max()) if kappa.size else 0.0
    n = order + int(np.ceil(2 * r * kmax))
    ann = build_radial_grid(r, 2 * r, n)
    ball = build_radial_grid(0.0, 2 * r, n, (r,))
    t_ann = np.outer(kappa, ann.nodes)
    t_ball = np.outer(kappa, ball.nodes)
    with np.errstate(invalid="ignore", divide="ignore"):
        j1t = np.where(t_ann > 0, spherical_jn(1, t_ann) / np.where(t_ann > 0, t_ann, 1), 1 / 3)
    J = (spherical_jn(2, t_ball) * weight(ball.nodes / r) / ball.nodes) @ ball.weights
    a = j1t @ ann.weights / r + J
    c = -(spherical_jn(2, t_ann) @ ann.weights) / r - 3 * J
    return a, c


@lru_cache(maxsize=8)
def _symbol_on_grid(M: int, L: float, r: float):
    from .spectral import wavenumbers

    kn = np.sqrt(sum(k * k for k in wavenumbers(M, L, 3)))
    uniq, inv = np.unique(np.round(kn, 10), return_inverse=True)
    a_u, c_u = pi_kernel_symbol(uniq, r)
    return a_u[inv].reshape(kn.shape), c_u[inv].reshape(kn.shape)


def pi_grid(u, r: float, pad: int = 2):
    """``pi(x, r)`` at every node of a ``pad * N`` grid, from a velocity grid.

    Uses ``pi = K_ij * (u_i u_j) - 2 u_i (K_ij * u_j) + |u|^2 / 3``, exact
    for band-limited ``u`` up to the evaluation of the symbol.
    """
    from .spectral import SpectralGrid, interpolate

    if u.dim != 3 or not u.is_vector:
        raise ValueError("pi_grid needs a 3D velocity grid")
    _check_radius(u.L, r, 2.0, "pi_grid")
    fine = interpolate(u, pad * u.N) if pad > 1 else u
    ks = fine.wavenumbers()
    kn = np.sqrt(sum(k * k for k in ks))
    a, c = _symbol_on_grid(fine.N, float(fine.L), float(r))
    with np.errstate(invalid="ignore", divide="ignore"):
        khat = [np.where(kn > 0, k / np.where(kn > 0, kn, 1), 0.0) for k in ks]

    def K(i, j):
        return a * (i == j) + c * khat[i] * khat[j]

    vals = fine.values
    M = fine.N
    axes = (0, 1, 2)
    from scipy import fft as sfft
    from .spectral import workers

    def conv(g, mult):
        gh = sfft.fftn(g, axes=axes, workers=workers())
        return sfft.ifftn(gh * mult, axes=axes, workers=workers()).real

    out = np.sum(vals**2, axis=0) / 3.0
    for i in range(3):
        for j in range(3):
            mult = K(i, j)
            out += conv(vals[i] * vals[j], mult) - 2 * vals[i] * conv(vals[j], mult)
    return SpectralGrid(out, fine.L, 3)


def pbar_grid(p, r: float):
    """``pbar(., r)`` on the grid of ``p`` (exact sinc multiplier)."""
    from .spectral import sinc_average
    return sinc_average(p, r)


def beta_grid(p, r: float):
    """``beta(., r)`` on the grid of ``p``: multiplier ``(Si(2 r k) - Si(r k)) / (r k)``."""
    from .spectral import apply_multiplier, radial_average_multiplier
    return apply_multiplier(p, radial_average_multiplier(p, r))

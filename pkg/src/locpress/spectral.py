"""Periodic-box spectral tools: Poisson pressure, Riesz transforms, sphere
averages as Fourier multipliers, grid norms and the binary grid format.

Sign conventions.  Coefficients use ``g(x) = sum_k g_k exp(i k.x)``.  The
Riesz transform ``R_j = d_j (-lap)^(-1/2)`` has multiplier ``i k_j / |k|``,
so ``R_1 sin x_1 = cos x_1``, and ``R_i R_j`` has multiplier
``-k_i k_j / |k|^2``.  With this convention ``p = R_i R_j (u_i u_j)`` is the
same zero-mean solution of ``-lap p = d_i d_j (u_i u_j)`` that
:func:`solve_pressure` returns.
"""
from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from ._trig import TrigSeries, series_from_grid

MAGIC = b"LPGR"
_HEADER = struct.Struct("<4sId")


def workers() -> int:
    """Worker count for scipy.fft, capped by ``LOCPRESS_THREADS``."""
    env = os.environ.get("LOCPRESS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class SpectralGrid:
    """Samples on the uniform periodic grid ``x_n = n L / N``.

    ``values`` has shape ``(N,)*dim`` for a scalar or ``(ncomp,) + (N,)*dim``
    for a vector field.  Grids are never mutated; operations return new ones.
    """

    values: np.ndarray
    L: float = 2 * np.pi
    dim: int = 3

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (self.dim, self.dim + 1):
            raise ValueError(f"values of shape {v.shape} do not fit dim={self.dim}")
        if len(set(v.shape[-self.dim:])) != 1:
            raise ValueError("grid must be cubic")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[-1]

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.dim + 1

    @property
    def axes(self) -> tuple:
        return tuple(range(self.values.ndim - self.dim, self.values.ndim))

    @property
    def cell_volume(self) -> float:
        return (self.L / self.N) ** self.dim

    def coefficients(self) -> np.ndarray:
        """Normalized full FFT coefficients ``g_k`` (shape of ``values``)."""
        return sfft.fftn(self.values, axes=self.axes, workers=workers()) / self.N**self.dim

    def wavenumbers(self) -> list[np.ndarray]:
        return wavenumbers(self.N, self.L, self.dim)

    def with_values(self, values) -> "SpectralGrid":
        return SpectralGrid(values, self.L, self.dim)

    def component(self, i: int) -> "SpectralGrid":
        return self.with_values(self.values[i])

    def to_series(self, tol: float = 1e-13) -> TrigSeries:
        return series_from_grid(self.values, self.L, self.dim, tol=tol)

    def round_trip_error(self) -> float:
        back = _inverse(self.coefficients(), self.axes, self.N, self.dim)
        scale = max(np.abs(self.values).max(), 1e-300)
        return float(np.abs(back - self.values).max() / scale)

    def points(self) -> np.ndarray:
        return grid_points(self.N, self.L, self.dim)


def wavenumbers(N: int, L: float, dim: int = 3) -> list[np.ndarray]:
    k1 = sfft.fftfreq(N, d=L / N) * 2 * np.pi
    return np.meshgrid(*([k1] * dim), indexing="ij", sparse=True)


def grid_points(N: int, L: float = 2 * np.pi, dim: int = 3) -> np.ndarray:
    """Grid nodes with shape ``(N,)*dim + (dim,)``."""
    x1 = np.arange(N) * (L / N)
    return np.stack(np.meshgrid(*([x1] * dim), indexing="ij"), axis=-1)


def _inverse(coef, axes, N, dim) -> np.ndarray:
    return sfft.ifftn(coef * N**dim, axes=axes, workers=workers()).real


def sample(field, N: int, L: float | None = None) -> SpectralGrid:
    """Sample a velocity field on the ``N^dim`` grid (component-first)."""
    L = field.L if L is None else L
    if L is None:
        raise ValueError(f"{field.kind} has no box length; pass L")
    pts = grid_points(N, L, field.dim)
    u = field.velocity(pts)
    return SpectralGrid(np.moveaxis(u, -1, 0), L, field.dim)


def sample_scalar(func, N: int, L: float = 2 * np.pi, dim: int = 3) -> SpectralGrid:
    return SpectralGrid(func(grid_points(N, L, dim)), L, dim)


# --- spectral calculus -----------------------------------------------------

def _pad_axis(c: np.ndarray, axis: int, N: int, M: int) -> np.ndarray:
    shape = list(c.shape)
    shape[axis] = M
    out = np.zeros(shape, dtype=complex)
    c = np.moveaxis(c, axis, 0)
    o = np.moveaxis(out, axis, 0)
    h = N // 2
    if N % 2:
        o[:h + 1] = c[:h + 1]
        o[M - h:] = c[N - h:]
    else:
        # the Nyquist coefficient is split between +N/2 and -N/2
        o[:h] = c[:h]
        o[h] = 0.5 * c[h]
        o[M - h] = 0.5 * c[h]
        o[M - h + 1:] = c[h + 1:]
    return out


def _truncate_axis(c: np.ndarray, axis: int, M: int, N: int) -> np.ndarray:
    shape = list(c.shape)
    shape[axis] = N
    out = np.zeros(shape, dtype=complex)
    c = np.moveaxis(c, axis, 0)
    o = np.moveaxis(out, axis, 0)
    h = N // 2
    if N % 2:
        o[:h + 1] = c[:h + 1]
        o[h + 1:] = c[M - h:]
    else:
        o[:h] = c[:h]
        o[h] = c[h] + c[M - h]
        o[h + 1:] = c[M - h + 1:]
    return out


def _pad(coef: np.ndarray, N: int, M: int, dim: int) -> np.ndarray:
    """Zero-pad a spectrum from ``N`` to ``M`` points per axis."""
    for ax in range(coef.ndim - dim, coef.ndim):
        coef = _pad_axis(coef, ax, N, M)
    return coef


def _truncate(coef: np.ndarray, M: int, N: int, dim: int) -> np.ndarray:
    """Keep the modes an ``N``-point grid can represent."""
    for ax in range(coef.ndim - dim, coef.ndim):
        coef = _truncate_axis(coef, ax, M, N)
    return coef


def products(u: SpectralGrid) -> np.ndarray:
    """Dealiased coefficients of ``u_i u_j`` (shape ``(d, d) + (N,)*d``).

    Products are formed on a grid padded by 3/2, which is the padding form
    of the 2/3 rule: every retained mode of ``u_i u_j`` is alias-free.
    """
    if not u.is_vector:
        raise ValueError("products needs a vector grid")
    N, d = u.N, u.dim
    M = 2 * ((3 * N + 3) // 4)
    uh = _pad(u.coefficients(), N, M, d)
    up = sfft.ifftn(uh * M**d, axes=tuple(range(1, d + 1)), workers=workers()).real
    prod = up[:, None] * up[None, :]
    ph = sfft.fftn(prod, axes=tuple(range(2, d + 2)), workers=workers()) / M**d
    return _truncate(ph, M, N, d)


def divergence_max(u: SpectralGrid) -> float:
    """``max_k |k . u_k|`` relative to ``max |u_k|``."""
    c = u.coefficients()
    ks = u.wavenumbers()
    div = sum(k * c[i] for i, k in enumerate(ks))
    return float(np.abs(div).max() / max(np.abs(c).max(), 1e-300))


def solve_pressure(u: SpectralGrid, check_divergence: bool = True) -> SpectralGrid:
    """Zero-mean ``p`` with ``-lap p = d_i d_j (u_i u_j)`` on the box."""
    if not u.is_vector or u.values.shape[0] != u.dim:
        raise ValueError("solve_pressure needs a velocity grid with dim components")
    if check_divergence:
        defect = divergence_max(u)
        if defect > 1e-8:
            warnings.warn(f"velocity is not divergence-free (relative defect {defect:.2e})",
                          stacklevel=2)
    ph = products(u)
    ks = u.wavenumbers()
    k2 = sum(k * k for k in ks)
    num = np.zeros_like(ph[0, 0])
    for i in range(u.dim):
        for j in range(u.dim):
            num = num - ks[i] * ks[j] * ph[i, j]
    with np.errstate(invalid="ignore", divide="ignore"):
        pk = np.where(k2 > 0, num / np.where(k2 > 0, k2, 1.0), 0.0)
    return u.with_values(_inverse(pk, tuple(range(u.dim)), u.N, u.dim))


def poisson_residual(u: SpectralGrid, p: SpectralGrid) -> float:
    """Max-norm of ``-lap p - d_i d_j (u_i u_j)`` with both sides spectral."""
    ph = products(u)
    ks = u.wavenumbers()
    k2 = sum(k * k for k in ks)
    src = sum(-ks[i] * ks[j] * ph[i, j] for i in range(u.dim) for j in range(u.dim))
    lhs = k2 * p.coefficients()
    return float(np.abs(_inverse(lhs - src, tuple(range(u.dim)), u.N, u.dim)).max())


def apply_multiplier(g: SpectralGrid, mult: np.ndarray) -> SpectralGrid:
    c = g.coefficients() * mult
    return g.with_values(_inverse(c, g.axes, g.N, g.dim))


def riesz(g: SpectralGrid, i: int) -> SpectralGrid:
    """Riesz transform along axis ``i`` (0-based), multiplier ``i k_i / |k|``."""
    if g.is_vector:
        raise ValueError("riesz acts on scalar grids")
    if not 0 <= i < g.dim:
        raise ValueError(f"axis {i} out of range for dim {g.dim}")
    c = g.coefficients()
    if abs(c[(0,) * g.dim]) > 1e-12 * max(np.abs(c).max(), 1e-300):
        warnings.warn("riesz: non-zero mean discarded", stacklevel=2)
    ks = g.wavenumbers()
    kn = np.sqrt(sum(k * k for k in ks))
    with np.errstate(invalid="ignore", divide="ignore"):
        mult = np.where(kn > 0, 1j * ks[i] / np.where(kn > 0, kn, 1.0), 0.0)
    return apply_multiplier(g, mult)


def sinc_multiplier(g: SpectralGrid, r: float) -> np.ndarray:
    ks = g.wavenumbers()
    kn = np.sqrt(sum(k * k for k in ks))
    if g.dim == 3:
        return np.sinc(r * kn / np.pi)
    from scipy.special import j0
    return j0(r * kn)


def sinc_average(p: SpectralGrid, r: float) -> SpectralGrid:
    """The field ``x -> pbar(x, r)`` (sphere average of radius ``r``)."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    mult = sinc_multiplier(p, r)
    if p.is_vector:
        mult = mult[None]
    return apply_multiplier(p, mult)


def radial_average_multiplier(g: SpectralGrid, r: float) -> np.ndarray:
    """Multiplier of ``beta``: ``(1/r) int_r^{2r} sinc(rho |k|) d rho``."""
    from scipy.special import sici
    ks = g.wavenumbers()
    kn = np.sqrt(sum(k * k for k in ks))
    t = r * kn
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (sici(2 * t)[0] - sici(t)[0]) / np.where(t > 0, t, 1.0)
    return np.where(t > 0, out, 1.0)


def gradient(g: SpectralGrid) -> SpectralGrid:
    """Spectral gradient of a scalar grid."""
    if g.is_vector:
        raise ValueError("gradient takes a scalar grid; use velocity_gradient")
    c = g.coefficients()
    ks = g.wavenumbers()
    return g.with_values(np.stack([_inverse(1j * k * c, g.axes, g.N, g.dim) for k in ks]))


def velocity_gradient(u: SpectralGrid) -> np.ndarray:
    """``out[i, j] = d_j u_i`` as a plain array of shape ``(d, d) + (N,)*d``."""
    return np.stack([gradient(u.component(i)).values for i in range(u.values.shape[0])])


def laplacian(g: SpectralGrid) -> SpectralGrid:
    ks = g.wavenumbers()
    return apply_multiplier(g, -sum(k * k for k in ks))


def leray(u: SpectralGrid) -> SpectralGrid:
    c = u.coefficients()
    ks = u.wavenumbers()
    k2 = sum(k * k for k in ks)
    kc = sum(k * c[i] for i, k in enumerate(ks))
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(k2 > 0, kc / np.where(k2 > 0, k2, 1.0), 0.0)
    out = np.stack([c[i] - ks[i] * f for i in range(u.dim)])
    return u.with_values(_inverse(out, u.axes, u.N, u.dim))


# --- norms -----------------------------------------------------------------

@dataclass(frozen=True)
class NormReport:
    L2: float
    L3: float
    L4: float
    L6: float
    Linf: float
    grad_L2: float
    lap_L2: float
    gradp_L2: float | None = None

    def Lq(self, q) -> float:
        table = {2: self.L2, 3: self.L3, 4: self.L4, 6: self.L6, np.inf: self.Linf}
        return table[q]


def lq_norm(values: np.ndarray, q, cell_volume: float) -> float:
    """Grid-quadrature ``L^q`` norm of a scalar or pointwise-magnitude array."""
    a = np.abs(values)
    if np.isinf(q):
        return float(a.max())
    return float((np.sum(a**q) * cell_volume) ** (1.0 / q))


def magnitude(g: SpectralGrid) -> np.ndarray:
    if g.is_vector:
        return np.sqrt(np.sum(g.values**2, axis=0))
    return np.abs(g.values)


def coefficient_l2(g: SpectralGrid) -> float:
    """``L^2`` norm from Parseval, for cross-checking the grid quadrature."""
    c = g.coefficients()
    return float(np.sqrt(np.sum(np.abs(c) ** 2) * g.L**g.dim))


def _deriv_l2(g: SpectralGrid, power: int) -> float:
    c = g.coefficients()
    ks = g.wavenumbers()
    k2 = sum(k * k for k in ks)
    return float(np.sqrt(np.sum(k2**power * np.abs(c) ** 2) * g.L**g.dim))


def norms(g: SpectralGrid, with_pressure: bool = True) -> NormReport:
    """Norm report; for a velocity grid ``gradp_L2`` uses its own pressure."""
    mag = magnitude(g)
    dv = g.cell_volume
    gp = None
    if with_pressure and g.is_vector and g.values.shape[0] == g.dim:
        gp = _deriv_l2(solve_pressure(g, check_divergence=False), 1)
    return NormReport(
        L2=lq_norm(mag, 2, dv), L3=lq_norm(mag, 3, dv), L4=lq_norm(mag, 4, dv),
        L6=lq_norm(mag, 6, dv), Linf=lq_norm(mag, np.inf, dv),
        grad_L2=_deriv_l2(g, 1), lap_L2=_deriv_l2(g, 2), gradp_L2=gp,
    )


def ufty_ratio(u: SpectralGrid, refine: int = 2) -> float:
    """Measured ``C`` in ``|u|_inf^2 <= C |grad u|_2 |lap u|_2``.

    The sup norm is taken on a ``refine``-times finer interpolated grid.
    """
    fine = interpolate(u, refine * u.N)
    r = norms(u, with_pressure=False)
    den = r.grad_L2 * r.lap_L2
    if den == 0:
        return 0.0
    return float(magnitude(fine).max() ** 2 / den)


def interpolate(g: SpectralGrid, M: int) -> SpectralGrid:
    """Trigonometric interpolation onto an ``M``-point grid (``M >= N``)."""
    if M < g.N:
        raise ValueError("interpolate only refines")
    c = _pad(g.coefficients(), g.N, M, g.dim)
    return SpectralGrid(_inverse(c, g.axes, M, g.dim), g.L, g.dim)


def naprpr_constant(g: SpectralGrid, r: float, tol: float = 1e-12) -> float:
    """``max r |k| |sinc(r|k|)|`` over the active modes of ``g``."""
    c = g.coefficients()
    if g.is_vector:
        c = np.abs(c).max(axis=0)
    ks = g.wavenumbers()
    kn = np.sqrt(sum(k * k for k in ks))
    active = np.abs(c) > tol * max(np.abs(c).max(), 1e-300)
    vals = r * kn * np.abs(np.sinc(r * kn / np.pi))
    return float(vals[np.broadcast_to(active, vals.shape)].max()) if active.any() else 0.0


# --- binary grid files -----------------------------------------------------

def write_grid(path, g: SpectralGrid) -> None:
    """``LPGR`` + u32 N + f64 L (little-endian), then float64 row-major per component."""
    if g.dim != 3:
        raise ValueError("the grid file format stores 3D grids")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.N, float(g.L)))
        fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())


def read_grid(path) -> SpectralGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: too short for a grid header")
    magic, N, L = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = len(data) - _HEADER.size
    per = N**3 * 8
    if N == 0 or body % per:
        raise ValueError(f"{path}: payload of {body} bytes does not fit N={N}")
    ncomp = body // per
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    shape = (N, N, N) if ncomp == 1 else (ncomp, N, N, N)
    return SpectralGrid(vals.reshape(shape), L, 3)

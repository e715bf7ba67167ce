"""Divergence-free test velocity fields with analytic gradients.

Every field exposes ``eval(x) -> (u, grad_u)`` with ``grad_u[..., i, j] =
d u_i / d x_j``, vectorized over leading axes of ``x``.  Fields are
immutable once built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.spatial.transform import Rotation

from ._trig import TrigSeries, series_from_grid
from .pressure import FunctionPressure, PressureSource, ZeroPressure

__all__ = [
    "InvalidFieldParameter",
    "HolderSeminorm",
    "VelocityField",
    "make_field",
    "exact_pressure",
    "FIELD_KINDS",
]

PERIODIC = "periodic_box"
WHOLE = "whole_space"
DECAYING = "whole_space_decaying"


class InvalidFieldParameter(ValueError):
    """Raised when a field is requested with parameters it cannot accept."""


@dataclass(frozen=True)
class HolderSeminorm:
    alpha: float
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("a seminorm cannot be negative")


class VelocityField:
    kind: str = "abstract"
    domain: str = WHOLE
    dim: int = 3

    def __init__(self, params: dict | None = None, L: float | None = None):
        self.params = dict(params or {})
        self.L = L

    def eval(self, x):
        raise NotImplementedError

    def velocity(self, x) -> np.ndarray:
        return self.eval(x)[0]

    def divergence(self, x) -> np.ndarray:
        return np.trace(self.eval(x)[1], axis1=-2, axis2=-1)

    def holder_seminorm(self) -> HolderSeminorm | None:
        return None

    def describe(self) -> dict[str, Any]:
        out = {"kind": self.kind, "domain": self.domain}
        if self.L is not None:
            out["L"] = self.L
        out.update(self.params)
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class TaylorGreen(VelocityField):
    kind = "taylor_green"
    domain = PERIODIC

    def __init__(self, amplitude: float = 1.0):
        super().__init__({"amplitude": amplitude}, L=2 * np.pi)
        self.a = float(amplitude)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        s1, s2, s3 = (np.sin(x[..., i]) for i in range(3))
        c1, c2, c3 = (np.cos(x[..., i]) for i in range(3))
        a = self.a
        u = a * np.stack([s1 * c2 * c3, -c1 * s2 * c3, np.zeros_like(s1)], axis=-1)
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = a * c1 * c2 * c3
        g[..., 0, 1] = -a * s1 * s2 * c3
        g[..., 0, 2] = -a * s1 * c2 * s3
        g[..., 1, 0] = a * s1 * s2 * c3
        g[..., 1, 1] = -a * c1 * c2 * c3
        g[..., 1, 2] = a * c1 * s2 * s3
        return u, g


class TaylorGreen2D(VelocityField):
    kind = "taylor_green_2d"
    domain = PERIODIC
    dim = 2

    def __init__(self, amplitude: float = 1.0):
        super().__init__({"amplitude": amplitude}, L=2 * np.pi)
        self.a = float(amplitude)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        s1, s2 = np.sin(x[..., 0]), np.sin(x[..., 1])
        c1, c2 = np.cos(x[..., 0]), np.cos(x[..., 1])
        a = self.a
        u = a * np.stack([s1 * c2, -c1 * s2], axis=-1)
        g = a * np.stack(
            [np.stack([c1 * c2, -s1 * s2], -1), np.stack([s1 * s2, -c1 * c2], -1)], -2
        )
        return u, g


class BeltramiABC(VelocityField):
    """``u = (A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)``."""

    kind = "beltrami_abc"
    domain = PERIODIC

    def __init__(self, A: float = 1.0, B: float = 1.0, C: float = 1.0):
        super().__init__({"A": A, "B": B, "C": C}, L=2 * np.pi)
        self.A, self.B, self.C = float(A), float(B), float(C)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        A, B, C = self.A, self.B, self.C
        s = [np.sin(x[..., i]) for i in range(3)]
        c = [np.cos(x[..., i]) for i in range(3)]
        u = np.stack(
            [A * s[2] + C * c[1], B * s[0] + A * c[2], C * s[1] + B * c[0]], axis=-1
        )
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 1] = -C * s[1]
        g[..., 0, 2] = A * c[2]
        g[..., 1, 0] = B * c[0]
        g[..., 1, 2] = -A * s[2]
        g[..., 2, 0] = -B * s[0]
        g[..., 2, 1] = C * c[1]
        return u, g

    def curl(self, x):
        g = self.eval(x)[1]
        return np.stack(
            [g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]],
            axis=-1,
        )


class ConstantField(VelocityField):
    kind = "constant"
    domain = WHOLE

    def __init__(self, v=(0.0, 0.0, 0.0)):
        v = np.asarray(v, dtype=float)
        super().__init__({"v": v.tolist()})
        self.v = v
        self.dim = len(v)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(self.v, x.shape).copy()
        return u, np.zeros(x.shape + (self.dim,))


class LinearShear(VelocityField):
    """``u = (gamma x_2, 0, 0)``: a polynomial field with zero pressure."""

    kind = "linear_shear"
    domain = WHOLE

    def __init__(self, gamma: float = 1.0):
        super().__init__({"gamma": gamma})
        self.gamma = float(gamma)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        u = np.zeros_like(x)
        u[..., 0] = self.gamma * x[..., 1]
        g = np.zeros(x.shape + (3,))
        g[..., 0, 1] = self.gamma
        return u, g


class ShearWave(VelocityField):
    """``u = (a sin(k x_2), 0, 0)``; ``u . grad u = 0`` so it decays like heat."""

    kind = "shear_wave"
    domain = PERIODIC

    def __init__(self, amplitude: float = 1.0, wavenumber: int = 1):
        super().__init__({"amplitude": amplitude, "wavenumber": wavenumber}, L=2 * np.pi)
        self.a, self.k = float(amplitude), int(wavenumber)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        u = np.zeros_like(x)
        u[..., 0] = self.a * np.sin(self.k * x[..., 1])
        g = np.zeros(x.shape + (3,))
        g[..., 0, 1] = self.a * self.k * np.cos(self.k * x[..., 1])
        return u, g


class SeriesField(VelocityField):
    """Velocity given by a finite plane-wave series."""

    def __init__(self, series: TrigSeries, kind: str, params: dict, domain: str, L=None,
                 holder: HolderSeminorm | None = None):
        super().__init__(params, L=L)
        self.series = series
        self.kind = kind
        self.domain = domain
        self.dim = series.dim
        self._holder = holder
        self._wrap = params.get("wrap", True)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "grid_sampled" and not self._wrap:
            if np.any(x < 0) or np.any(x >= self.L):
                raise ValueError("point outside the sampled box and wrap is disabled")
        return self.series.value(x), self.series.gradient(x)

    def holder_seminorm(self):
        return self._holder

    def max_leray_defect(self) -> float:
        """Largest ``|k . a_k|`` over the modes; zero for solenoidal series."""
        return float(np.max(np.abs(np.einsum("md,md->m", self.series.k, self.series.c))))


class GaussianCurl(VelocityField):
    """Curl of ``sum_m c_m exp(-|x - y_m|^2 / (2 s_m^2))``.

    Divergence-free by construction and decays like a Gaussian, so every
    whole-space integral converges quickly.
    """

    kind = "gaussian_curl"
    domain = DECAYING

    def __init__(self, centers, widths, vectors, params=None):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        self.widths = np.asarray(widths, dtype=float).ravel()
        self.vectors = np.asarray(vectors, dtype=float).reshape(-1, 3)
        super().__init__(params or {})
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1
        # E[m, i, j] = eps_ijl c_l
        self._eps_c = np.einsum("ijl,ml->mij", eps, self.vectors)

    @property
    def support_radius(self) -> float:
        """Radius outside which ``|u|`` is below ~1e-15 of its scale."""
        return float(np.max(np.linalg.norm(self.centers, axis=1) + 9.0 * self.widths))

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        flat = x.reshape(-1, 3)
        u = np.zeros_like(flat)
        g = np.zeros((len(flat), 3, 3))
        for cen, s, c, ec in zip(self.centers, self.widths, self.vectors, self._eps_c):
            d = flat - cen
            gs = np.exp(-np.einsum("pi,pi->p", d, d) / (2 * s * s)) / (s * s)
            dxc = np.cross(d, c)
            u -= gs[:, None] * dxc
            g += gs[:, None, None] * (dxc[:, :, None] * d[:, None, :] / (s * s) - ec)
        return u.reshape(lead + (3,)), g.reshape(lead + (3, 3))


def _lacunary(alpha: float, n_modes: int, seed: int, first: int = 1) -> SeriesField:
    rng = np.random.default_rng(seed)
    rots = Rotation.random(n_modes, random_state=rng)
    ns = np.arange(first, first + n_modes)
    k = rots.apply(np.array([1.0, 0.0, 0.0])) * (2.0**ns)[:, None]
    c = np.empty((n_modes, 3), dtype=complex)
    for m in range(n_modes):
        khat = k[m] / np.linalg.norm(k[m])
        a = rng.normal(size=3) + 1j * rng.normal(size=3)
        a -= khat * (khat @ a)
        c[m] = a / np.linalg.norm(a) * 2.0 ** (-alpha * ns[m])
    value = lacunary_holder_bound(alpha, ns)
    params = {"alpha": alpha, "n_modes": n_modes, "seed": seed}
    return SeriesField(TrigSeries(k, c), "lacunary_holder", params, WHOLE,
                       holder=HolderSeminorm(alpha, value))


def lacunary_holder_bound(alpha: float, ns) -> float:
    """Exact sup over ``d > 0`` of ``d^-alpha sum_n 2^(-alpha n) min(2, 2^n d)``.

    Each unit-amplitude wave obeys ``|Re a (e^{i t} - e^{i s})| <= min(2, |t - s|)``,
    so this bounds the C^alpha seminorm of the lacunary series.
    """
    ns = np.sort(np.asarray(ns, dtype=float))
    amps = 2.0 ** (-alpha * ns)
    freqs = 2.0**ns
    breaks = np.sort(2.0 / freqs)

    def g(d):
        return d**-alpha * np.sum(amps * np.minimum(2.0, freqs * d))

    best = max(g(b) for b in breaks)
    edges = np.concatenate([[0.0], breaks, [np.inf]])
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = np.sqrt(lo * hi) if lo > 0 and np.isfinite(hi) else (hi / 2 if lo == 0 else 2 * lo)
        lin = freqs * mid < 2.0  # modes in the linear regime on this interval
        A = np.sum(amps[lin] * freqs[lin])
        B = 2.0 * np.sum(amps[~lin])
        if A > 0 and B > 0:
            d = alpha * B / ((1 - alpha) * A)
            if lo < d < hi:
                best = max(best, g(d))
    return float(best)


def _random_solenoidal(kmax: int, seed: int, rms: float = 1.0) -> SeriesField:
    rng = np.random.default_rng(seed)
    r = np.arange(-kmax, kmax + 1)
    kk = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    # one representative of each +-k pair
    half = (kk[:, 0] > 0) | ((kk[:, 0] == 0) & (kk[:, 1] > 0)) | (
        (kk[:, 0] == 0) & (kk[:, 1] == 0) & (kk[:, 2] > 0))
    kk = kk[half].astype(float)
    a = rng.normal(size=kk.shape) + 1j * rng.normal(size=kk.shape)
    k2 = np.einsum("md,md->m", kk, kk)
    a -= kk * (np.einsum("md,md->m", kk, a) / k2)[:, None]
    a /= np.sqrt(k2)[:, None]
    mean_sq = 0.5 * np.sum(np.abs(a) ** 2)
    a *= rms / np.sqrt(mean_sq)
    params = {"kmax": kmax, "seed": seed, "rms": rms}
    return SeriesField(TrigSeries(kk, a), "random_solenoidal", params, PERIODIC, L=2 * np.pi)


def _random_solenoidal_2d(kmax: int, seed: int, rms: float = 1.0) -> SeriesField:
    rng = np.random.default_rng(seed)
    r = np.arange(-kmax, kmax + 1)
    kk = np.stack(np.meshgrid(r, r, indexing="ij"), -1).reshape(-1, 2)
    half = (kk[:, 0] > 0) | ((kk[:, 0] == 0) & (kk[:, 1] > 0))
    kk = kk[half].astype(float)
    psi = (rng.normal(size=len(kk)) + 1j * rng.normal(size=len(kk))) / np.einsum("md,md->m", kk, kk)
    c = np.stack([1j * kk[:, 1] * psi, -1j * kk[:, 0] * psi], axis=1)
    c *= rms / np.sqrt(0.5 * np.sum(np.abs(c) ** 2))
    params = {"kmax": kmax, "seed": seed, "rms": rms}
    return SeriesField(TrigSeries(kk, c), "random_solenoidal_2d", params, PERIODIC, L=2 * np.pi)


def _gaussian_curl(seed: int, n_blobs: int = 3, amplitude: float = 1.0) -> GaussianCurl:
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.8, 0.8, size=(n_blobs, 3))
    widths = rng.uniform(0.6, 0.9, size=n_blobs)
    vectors = amplitude * rng.normal(size=(n_blobs, 3))
    params = {"seed": seed, "n_blobs": n_blobs, "amplitude": amplitude}
    return GaussianCurl(centers, widths, vectors, params)


def _grid_sampled(values, L: float, wrap: bool = True, tol: float = 1e-13) -> SeriesField:
    values = np.asarray(values, dtype=float)
    dim = values.ndim - 1
    if values.shape[0] != dim:
        raise InvalidFieldParameter(f"grid_sampled: expected {dim} components, got {values.shape[0]}")
    series = series_from_grid(values, L, dim, tol=tol)
    params = {"N": values.shape[-1], "wrap": wrap}
    return SeriesField(series, "grid_sampled", params, PERIODIC, L=L)


def _require(cond: bool, kind: str, msg: str):
    if not cond:
        raise InvalidFieldParameter(f"{kind}: {msg}")


FIELD_KINDS = (
    "taylor_green", "taylor_green_2d", "beltrami_abc", "random_solenoidal",
    "random_solenoidal_2d", "lacunary_holder", "grid_sampled", "gaussian_curl",
    "constant", "linear_shear", "shear_wave",
)


def make_field(kind: str, params: dict | None = None) -> VelocityField:
    """Build a velocity field of the given kind.

    ``random_solenoidal`` with ``domain="whole_space_decaying"`` yields the
    Gaussian-enveloped curl field used for whole-space formulas.
    """
    p = dict(params or {})
    if kind == "taylor_green":
        return TaylorGreen(p.get("amplitude", 1.0))
    if kind == "taylor_green_2d":
        return TaylorGreen2D(p.get("amplitude", 1.0))
    if kind == "beltrami_abc":
        return BeltramiABC(p.get("A", 1.0), p.get("B", 1.0), p.get("C", 1.0))
    if kind == "constant":
        return ConstantField(p.get("v", (0.0, 0.0, 0.0)))
    if kind == "linear_shear":
        return LinearShear(p.get("gamma", 1.0))
    if kind == "shear_wave":
        return ShearWave(p.get("amplitude", 1.0), p.get("wavenumber", 1))
    if kind == "lacunary_holder":
        alpha = float(p.get("alpha", 0.3))
        _require(0 < alpha < 1, kind, f"alpha must lie in (0, 1), got {alpha}")
        n = int(p.get("N", p.get("n_modes", 8)))
        _require(n >= 1, kind, "need at least one mode")
        return _lacunary(alpha, n, int(p.get("seed", 0)))
    if kind in ("gaussian_curl",) or (
        kind == "random_solenoidal" and p.get("domain") == DECAYING
    ):
        n = int(p.get("n_blobs", 3))
        _require(n >= 1, kind, "need at least one blob")
        return _gaussian_curl(int(p.get("seed", 0)), n, float(p.get("amplitude", 1.0)))
    if kind == "random_solenoidal":
        kmax = int(p.get("kmax", 2))
        _require(kmax >= 1, kind, f"kmax must be >= 1, got {kmax}")
        return _random_solenoidal(kmax, int(p.get("seed", 0)), float(p.get("rms", 1.0)))
    if kind == "random_solenoidal_2d":
        kmax = int(p.get("kmax", 2))
        _require(kmax >= 1, kind, f"kmax must be >= 1, got {kmax}")
        return _random_solenoidal_2d(kmax, int(p.get("seed", 0)), float(p.get("rms", 1.0)))
    if kind == "grid_sampled":
        _require("values" in p, kind, "needs 'values' (component-first array)")
        L = float(p.get("L", 2 * np.pi))
        _require(L > 0, kind, f"L must be positive, got {L}")
        return _grid_sampled(p["values"], L, bool(p.get("wrap", True)))
    raise InvalidFieldParameter(f"unknown field kind {kind!r}")


def exact_pressure(field: VelocityField) -> PressureSource | None:
    """Closed-form zero-mean pressure where one is known, else ``None``."""
    if isinstance(field, TaylorGreen):
        a2 = field.a**2 / 16.0

        def p(x):
            return a2 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1])) * (np.cos(2 * x[..., 2]) + 2)

        def dp(x):
            c2z = np.cos(2 * x[..., 2]) + 2
            sxy = np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1])
            return a2 * np.stack(
                [-2 * np.sin(2 * x[..., 0]) * c2z, -2 * np.sin(2 * x[..., 1]) * c2z,
                 -2 * sxy * np.sin(2 * x[..., 2])], axis=-1)

        return FunctionPressure(p, dp, name="taylor_green_exact", period=field.L)
    if isinstance(field, TaylorGreen2D):
        a2 = field.a**2 / 4.0
        return FunctionPressure(
            lambda x: a2 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1])),
            lambda x: -2 * a2 * np.stack([np.sin(2 * x[..., 0]), np.sin(2 * x[..., 1])], -1),
            name="taylor_green_2d_exact", period=field.L,
        )
    if isinstance(field, BeltramiABC):
        const = 0.5 * (field.A**2 + field.B**2 + field.C**2)

        def p(x):
            u = field.velocity(x)
            return const - 0.5 * np.einsum("...i,...i->...", u, u)

        def dp(x):
            u, g = field.eval(x)
            return -np.einsum("...i,...ij->...j", u, g)

        return FunctionPressure(p, dp, name="beltrami_exact", period=field.L)
    if isinstance(field, (ConstantField, LinearShear, ShearWave)):
        return ZeroPressure()
    return None

"""Quadrature on spheres, balls and shells centered at a point.

The product rule used here is Gauss-Legendre in ``cos(theta)`` times the
periodic trapezoid rule in ``phi``.  Its polynomial exactness is measured
when the rule is built, rather than assumed, because every identity check
downstream relies on it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAX_DEGREE = 400

__all__ = [
    "SphereRule",
    "RadialGrid",
    "build_sphere_rule",
    "build_circle_rule",
    "build_radial_grid",
    "geometric_radial_grid",
    "sphere_points",
    "sphere_average",
    "ball_integral",
    "sigma",
    "weight",
]


@dataclass(frozen=True)
class SphereRule:
    """Nodes and normalized weights on the unit sphere (or circle).

    ``weights`` sum to one, so ``weights @ g(nodes)`` is the average of
    ``g`` over the sphere.
    """

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    dim: int = 3

    def __len__(self) -> int:
        return len(self.weights)

    def average(self, values: np.ndarray) -> np.ndarray:
        """Average values sampled at the nodes over the last node axis."""
        return np.tensordot(values, self.weights, axes=([-1], [0]))


@dataclass(frozen=True)
class RadialGrid:
    """Composite Gauss-Legendre rule on ``(r0, r1]``.

    ``weights`` integrate against ``d rho``; use :attr:`ball_weights` for
    the ``rho**2 d rho`` measure of a 3D ball.
    """

    nodes: np.ndarray
    weights: np.ndarray
    r0: float
    r1: float
    order: int
    breakpoints: tuple = field(default=())

    @property
    def ball_weights(self) -> np.ndarray:
        return self.weights * self.nodes**2


def _gl_exactness(t: np.ndarray, w: np.ndarray, cap: int) -> int:
    # Largest j with sum(w t^k) exact for all k <= j on [-1, 1].
    deg = -1
    for k in range(cap + 1):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        if abs(np.dot(w, t**k) - exact) > 1e-13:
            break
        deg = k
    return deg


def _trap_exactness(m_points: int, cap: int) -> int:
    phi = 2 * np.pi * np.arange(m_points) / m_points
    deg = 0
    for m in range(1, cap + 1):
        if abs(np.mean(np.exp(1j * m * phi))) > 1e-13:
            break
        deg = m
    return deg


def build_sphere_rule(degree: int, dim: int = 3) -> SphereRule:
    """Build a product rule on the unit sphere exact to at least ``degree``.

    For ``dim=2`` this is the uniform rule on the unit circle.
    """
    if degree < 2:
        raise ValueError(f"degree must be >= 2, got {degree}")
    if degree > MAX_DEGREE:
        raise ValueError(f"degree {degree} exceeds the cap {MAX_DEGREE}")
    if dim == 2:
        return build_circle_rule(degree)
    if dim != 3:
        raise ValueError(f"dim must be 2 or 3, got {dim}")

    n_theta = (degree + 2) // 2
    n_phi = degree + 1
    t, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - t**2)
    nodes = np.stack(
        [
            np.outer(st, np.cos(phi)),
            np.outer(st, np.sin(phi)),
            np.outer(t, np.ones(n_phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.outer(wt / 2.0, np.full(n_phi, 1.0 / n_phi)).ravel()
    cap = degree + 4
    measured = min(_gl_exactness(t, wt, cap), _trap_exactness(n_phi, cap))
    return SphereRule(nodes, weights, measured, 3)


def build_circle_rule(degree: int) -> SphereRule:
    """Uniform rule on the unit circle, exact for trigonometric degree."""
    m = degree + 1
    phi = 2 * np.pi * np.arange(m) / m
    nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    weights = np.full(m, 1.0 / m)
    return SphereRule(nodes, weights, _trap_exactness(m, degree + 4), 2)


def build_radial_grid(
    r0: float,
    r1: float,
    order: int = 24,
    breakpoints: Sequence[float] = (),
) -> RadialGrid:
    """Composite Gauss-Legendre grid on ``(r0, r1]``.

    Interior ``breakpoints`` split the interval so that integrands with
    kinks there (the weight function at ``rho = r``) keep spectral accuracy.
    No node ever sits on ``r0``, so integrable singularities at ``r0 = 0``
    are never sampled.
    """
    if not r1 > r0 >= 0:
        raise ValueError(f"need 0 <= r0 < r1, got r0={r0}, r1={r1}")
    edges = [r0] + sorted(b for b in breakpoints if r0 < b < r1) + [r1]
    t, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        nodes.append(a + half * (t + 1.0))
        weights.append(half * w)
    return RadialGrid(
        np.concatenate(nodes), np.concatenate(weights), r0, r1, order,
        tuple(edges[1:-1]),
    )


def geometric_radial_grid(r: float, shells: int = 16, order: int = 8) -> RadialGrid:
    """Gauss rules on the shells ``[r 2^-(k+1), r 2^-k]`` plus a core ``[0, r 2^-shells]``.

    Used for ``int_0^r d rho / rho`` integrals whose integrand is O(rho).
    """
    edges = [r * 2.0**-k for k in range(shells, 0, -1)]
    return build_radial_grid(0.0, r, order, edges)


def sphere_points(x, radii, rule: SphereRule) -> np.ndarray:
    """Points ``x + rho * xi`` with shape ``(len(radii), len(rule), dim)``."""
    x = np.asarray(x, dtype=float)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    return x + radii[:, None, None] * rule.nodes[None, :, :]


def sphere_average(g: Callable, x, r: float, rule: SphereRule) -> float:
    """Normalized average of ``g`` over the sphere of radius ``r`` about ``x``."""
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    pts = np.asarray(x, dtype=float) + r * rule.nodes
    return float(rule.weights @ np.asarray(g(pts)))


def ball_integral(
    g: Callable,
    x,
    r0: float,
    r1: float,
    rule: SphereRule,
    radial: RadialGrid | int = 24,
) -> float:
    """Integral of ``g`` over the shell ``r0 <= |y - x| <= r1``.

    ``radial`` is either a prepared grid on ``(r0, r1]`` or a Gauss order.
    """
    if not r1 > r0:
        raise ValueError(f"need r0 < r1, got r0={r0}, r1={r1}")
    if not isinstance(radial, RadialGrid):
        radial = build_radial_grid(r0, r1, int(radial))
    pts = sphere_points(x, radial.nodes, rule)
    vals = rule.average(np.asarray(g(pts)))
    if rule.dim == 3:
        return float(4 * np.pi * np.dot(radial.weights * radial.nodes**2, vals))
    return float(2 * np.pi * np.dot(radial.weights * radial.nodes, vals))


def sigma(direction) -> np.ndarray:
    """The trace-free kernel ``3 d d^T - I`` for unit direction(s) ``d``."""
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise ValueError("sigma expects unit direction vectors")
    dim = d.shape[-1]
    return 3.0 * (d[..., :, None] * d[..., None, :]) - np.eye(dim)


def weight(lam):
    """Piecewise-linear cutoff: 1 on [0, 1], 2 - lam on [1, 2], 0 beyond."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("weight is defined for lam >= 0")
    out = np.clip(2.0 - lam, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out

"""Whole-space pressure of rapidly decaying fields by Newtonian potential.

For divergence-free ``u`` the Poisson source is ``f = tr((grad u)^2)``, and
the decaying solution is ``p = (1/4 pi) int f(y) / |x - y| dy``.  Working in
spherical coordinates about ``x``, ``p``, its sphere average and its radial
average ``beta`` are all one-dimensional integrals of the same radial
profile ``F(s) = avg_{|xi|=1} f(x + s xi)`` against different kernels:

    p(x)        = int s^2 F(s) / s           ds
    pbar(x, r)  = int s^2 F(s) / max(r, s)   ds      (shell theorem)
    beta(x, r)  = int s^2 F(s) K_beta(s)     ds

so one evaluation of ``F`` serves all three.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pressure import PressureSource
from .sphere import SphereRule, build_radial_grid, build_sphere_rule


def beta_kernel(s, r: float) -> np.ndarray:
    """``(1/r) int_r^{2r} d rho / max(rho, s)``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    inner = s <= r
    mid = (s > r) & (s < 2 * r)
    outer = s >= 2 * r
    out[inner] = np.log(2.0) / r
    sm = s[mid]
    out[mid] = ((sm - r) / sm + np.log(2 * r / sm)) / r
    out[outer] = 1.0 / s[outer]
    return out


@dataclass(frozen=True)
class KernelIntegrals:
    p: float
    pbar: float
    beta: float


class NewtonianPressure(PressureSource):
    """Decaying pressure of a whole-space field with a known support radius.

    ``degree`` is the sphere-rule degree for the radial profile and
    ``piece`` the longest Gauss-Legendre panel in ``s``.
    """

    name = "newtonian"

    def __init__(self, field, degree: int = 40, order: int = 16, piece: float = 0.5,
                 max_degree: int = 160):
        if getattr(field, "domain", None) != "whole_space_decaying":
            raise ValueError("NewtonianPressure needs a whole_space_decaying field")
        self.field = field
        self.degree = degree
        self.max_degree = max_degree
        self.order = order
        self.piece = piece
        self._rules: dict[int, SphereRule] = {}
        self._center = np.mean(field.centers, axis=0)
        # f ~ |grad u|^2 carries exp(-d^2 / s^2); 6.5 widths is below 1e-18
        spread = np.max(np.linalg.norm(field.centers - self._center, axis=1))
        self._reach = float(spread + 6.5 * np.max(field.widths))
        self._width = float(np.min(field.widths))

    @property
    def rule(self) -> SphereRule:
        return self._rule_for(0.0)

    def _rule_for(self, dist: float) -> SphereRule:
        """Angular resolution grows with distance: blobs subtend ~ width / dist."""
        extra = 12.0 * max(0.0, dist - 1.0) * 0.6 / self._width
        deg = min(self.max_degree, self.degree + 2 * int(np.ceil(extra / 2)))
        if deg not in self._rules:
            self._rules[deg] = build_sphere_rule(deg)
        return self._rules[deg]

    def source(self, pts) -> np.ndarray:
        g = self.field.eval(pts)[1]
        return np.einsum("...ij,...ji->...", g, g)

    def _profile(self, x, breaks):
        x = np.asarray(x, dtype=float)
        dist = float(np.linalg.norm(x - self._center))
        lo = max(0.0, dist - self._reach)
        hi = dist + self._reach
        edges = sorted({b for b in breaks if lo < b < hi} | {hi})
        fine = [lo]
        for e in edges:
            a = fine[-1]
            n = max(1, int(np.ceil((e - a) / self.piece)))
            fine.extend(a + (e - a) * np.arange(1, n + 1) / n)
        grid = build_radial_grid(lo, hi, self.order, fine[1:-1])
        rule = self._rule_for(dist)
        pts = x + grid.nodes[:, None, None] * rule.nodes[None]
        F = self.source(pts) @ rule.weights
        return grid.nodes, grid.weights * grid.nodes**2 * F

    def kernel_integrals(self, x, r: float) -> KernelIntegrals:
        s, wF = self._profile(x, (r, 2 * r))
        return KernelIntegrals(
            p=float(np.sum(wF / s)),
            pbar=float(np.sum(wF / np.maximum(r, s))),
            beta=float(np.sum(wF * beta_kernel(s, r))),
        )

    def kernel_integrals_many(self, x, radii) -> tuple[np.ndarray, np.ndarray]:
        """``(pbar, beta)`` at every radius from one radial profile."""
        radii = np.asarray(radii, dtype=float)
        s, wF = self._profile(x, tuple(radii) + tuple(2 * radii))
        pb = np.array([np.sum(wF / np.maximum(r, s)) for r in radii])
        be = np.array([np.sum(wF * beta_kernel(s, r)) for r in radii])
        return pb, be

    def value(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 3)
        out = np.empty(len(flat))
        for i, x in enumerate(flat):
            s, wF = self._profile(x, ())
            out[i] = np.sum(wF / s)
        return out.reshape(pts.shape[:-1])

    def pbar(self, x, r: float, rule: SphereRule | None = None) -> float:
        if r == 0:
            return float(self.value(np.asarray(x, dtype=float)))
        return self.kernel_integrals(x, r).pbar

    def pbar_many(self, x, radii, rule: SphereRule | None = None) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        s, wF = self._profile(x, tuple(radii))
        return np.array([np.sum(wF / np.maximum(r, s)) for r in radii])

    def beta(self, x, r: float) -> float:
        return self.kernel_integrals(x, r).beta


def whole_space_norms(field, h: float = 0.08, pad: float = 0.0) -> dict:
    """``|u|_{L2}^2`` and ``|grad u|_{L2}^2`` by the trapezoid rule on a box.

    For a smooth field that decays like a Gaussian the trapezoid rule is
    spectrally accurate once the box covers the support.
    """
    R = field.support_radius + pad
    c = np.mean(field.centers, axis=0)
    n = int(np.ceil(2 * R / h))
    axis = np.linspace(-R, R, n + 1)
    dv = (axis[1] - axis[0]) ** 3
    u2 = g2 = 0.0
    for x0 in axis:
        plane = np.stack(np.meshgrid([x0], axis, axis, indexing="ij"), -1)[0] + c
        u, g = field.eval(plane)
        u2 += np.sum(u * u)
        g2 += np.sum(g * g)
    return {"u_L2_sq": u2 * dv, "grad_L2_sq": g2 * dv, "h": float(axis[1] - axis[0]), "R": R}

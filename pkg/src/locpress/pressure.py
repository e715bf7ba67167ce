"""Pressure sources: anything that can evaluate a reference pressure.

Local formulas need ``p`` at arbitrary points (sphere nodes), and averages
of ``p`` over spheres.  Sources that know a cheaper exact route to the
averages override :meth:`PressureSource.pbar`.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .sphere import SphereRule


class PressureSource:
    """Base class.  Subclasses implement :meth:`value` (and optionally
    :meth:`gradient`)."""

    name = "pressure"
    period: float | None = None  # box length for periodic sources

    def value(self, pts) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, pts) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no gradient")

    def __call__(self, pts) -> np.ndarray:
        return self.value(pts)

    def pbar(self, x, r: float, rule: SphereRule) -> float:
        if r == 0:
            return float(self.value(np.asarray(x, dtype=float)))
        pts = np.asarray(x, dtype=float) + r * rule.nodes
        return float(rule.weights @ self.value(pts))

    def pbar_many(self, x, radii, rule: SphereRule) -> np.ndarray:
        """``pbar`` at several radii in one evaluation."""
        radii = np.asarray(radii, dtype=float)
        pts = np.asarray(x, dtype=float) + radii[:, None, None] * rule.nodes
        return self.value(pts) @ rule.weights


class FunctionPressure(PressureSource):
    def __init__(self, func: Callable, grad: Callable | None = None, name: str = "closed_form",
                 period: float | None = None):
        self._func = func
        self._grad = grad
        self.name = name
        self.period = period

    def value(self, pts):
        return self._func(np.asarray(pts, dtype=float))

    def gradient(self, pts):
        if self._grad is None:
            return super().gradient(pts)
        return self._grad(np.asarray(pts, dtype=float))


class ZeroPressure(PressureSource):
    name = "zero"

    def value(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape[:-1])

    def gradient(self, pts):
        return np.zeros_like(np.asarray(pts, dtype=float))


class SeriesPressure(PressureSource):
    """Pressure held as a plane-wave series (from a spectral grid or exact)."""

    def __init__(self, series, name: str = "spectral", period: float | None = None):
        self.series = series
        self.name = name
        self.period = period

    def value(self, pts):
        return self.series.value(pts)

    def gradient(self, pts):
        return self.series.gradient(pts)

    def averaged(self, r: float) -> "SeriesPressure":
        """The field ``x -> pbar(x, r)``, exactly, via the sinc multiplier."""
        return SeriesPressure(self.series.sphere_averaged(r), f"{self.name}_avg", self.period)

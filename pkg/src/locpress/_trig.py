"""Real-valued finite sums of plane waves.

A series holds wavevectors ``k`` with shape ``(M, d)`` and complex
coefficients ``c`` with shape ``(M, ncomp)``; its value is
``Re sum_m c_m exp(i k_m . x)``.  Wavevectors need not be integers, which
lets the lacunary test fields use rotated frequencies on the whole space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.special import j0 as bessel_j0

_CHUNK = 1 << 21  # points x modes per evaluation block


@dataclass(frozen=True)
class TrigSeries:
    k: np.ndarray
    c: np.ndarray

    @property
    def dim(self) -> int:
        return self.k.shape[1]

    @property
    def ncomp(self) -> int:
        return self.c.shape[1]

    def __len__(self) -> int:
        return len(self.k)

    def _blocks(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        step = max(1, _CHUNK // max(1, len(self.k)))
        for s in range(0, len(flat), step):
            yield s, np.exp(1j * (flat[s:s + step] @ self.k.T))
        return

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        out = np.empty((int(np.prod(lead, dtype=int)), self.ncomp))
        for s, e in self._blocks(x):
            out[s:s + len(e)] = (e @ self.c).real
        if self.ncomp == 1:
            return out.reshape(lead)
        return out.reshape(lead + (self.ncomp,))

    def gradient(self, x) -> np.ndarray:
        """``out[..., a, j] = d(component a)/dx_j``; scalar series drop ``a``."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        d, nc = self.dim, self.ncomp
        ck = (1j * self.c[:, :, None] * self.k[:, None, :]).reshape(len(self.k), nc * d)
        out = np.empty((int(np.prod(lead, dtype=int)), nc * d))
        for s, e in self._blocks(x):
            out[s:s + len(e)] = (e @ ck).real
        out = out.reshape(lead + (nc, d))
        return out[..., 0, :] if nc == 1 else out

    def scaled(self, factors: np.ndarray) -> "TrigSeries":
        return TrigSeries(self.k, self.c * np.asarray(factors)[:, None])

    def sphere_averaged(self, r: float) -> "TrigSeries":
        """Exact spherical (circular in 2D) average of radius ``r``."""
        kk = np.linalg.norm(self.k, axis=1) * r
        if self.dim == 3:
            return self.scaled(np.sinc(kk / np.pi))
        return self.scaled(bessel_j0(kk))

    def symmetric(self) -> "TrigSeries":
        """Equivalent series with both ``k`` and ``-k`` and halved coefficients,
        so that the complex sum itself is real."""
        return TrigSeries(
            np.concatenate([self.k, -self.k]),
            np.concatenate([0.5 * self.c, 0.5 * self.c.conj()]),
        )

    def merged(self, tol: float = 1e-9) -> "TrigSeries":
        """Combine coincident wavevectors and drop vanishing terms."""
        key = np.round(self.k / tol).astype(np.int64)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        c = np.zeros((len(first), self.ncomp), dtype=complex)
        np.add.at(c, inv.ravel(), self.c)
        keep = np.abs(c).max(axis=1) > 1e-15 * max(1.0, np.abs(c).max())
        return TrigSeries(self.k[first][keep], c[keep])


def pressure_series(u: TrigSeries) -> TrigSeries:
    """Zero-mean solution of ``-lap p = d_i d_j (u_i u_j)`` for a series ``u``.

    Each product wave ``b_m b_n^T exp(i q.x)`` with ``q = q_m + q_n``
    contributes ``-(q.b_m)(q.b_n)/|q|^2 exp(i q.x)``; ``q = 0`` terms are
    constants and are dropped by the gauge.
    """
    s = u.symmetric()
    q = s.k[:, None, :] + s.k[None, :, :]
    qb = np.einsum("mnd,md->mn", q, s.c)  # q . b_m
    qb2 = np.einsum("mnd,nd->mn", q, s.c)  # q . b_n
    q2 = np.einsum("mnd,mnd->mn", q, q)
    scale = np.maximum(1.0, np.max(np.abs(s.k)) ** 2)
    nz = q2 > 1e-24 * scale
    coef = np.zeros_like(q2, dtype=complex)
    coef[nz] = -qb[nz] * qb2[nz] / q2[nz]
    series = TrigSeries(q[nz].reshape(-1, u.dim), coef[nz].reshape(-1, 1))
    return series.merged()


def series_from_grid(values: np.ndarray, L: float, dim: int, tol: float = 1e-13) -> TrigSeries:
    """Exact trigonometric interpolant of periodic grid samples.

    Modes whose coefficient is below ``tol`` times the largest are dropped,
    which is exact for band-limited data and keeps evaluation cheap.  The
    Nyquist modes are split symmetrically so the interpolant stays real.
    """
    values = np.asarray(values, dtype=float)
    scalar = values.ndim == dim
    comps = values[None] if scalar else values
    n = comps.shape[-1]
    coef = sfft.fftn(comps, axes=tuple(range(1, dim + 1))) / n**dim
    ints = np.fft.fftfreq(n, 1.0 / n)
    grids = np.meshgrid(*([ints] * dim), indexing="ij")
    kint = np.stack([g.ravel() for g in grids], axis=1)
    c = coef.reshape(len(comps), -1).T
    amp = np.abs(c).max(axis=1)
    keep = amp > tol * max(amp.max(), 1e-300)
    kint, c = kint[keep], c[keep]
    if n % 2 == 0:
        # a Nyquist index -n/2 is shared with +n/2; split it symmetrically
        nyq = kint == -n // 2
        if nyq.any():
            rows = np.nonzero(nyq.any(axis=1))[0]
            extra_k, extra_c = [], []
            for row in rows:
                mask = nyq[row]
                count = int(mask.sum())
                # spread over all 2^count sign flips of Nyquist indices
                for bits in range(1, 2**count):
                    kk = kint[row].copy()
                    idx = np.nonzero(mask)[0]
                    for b, ax in enumerate(idx):
                        if bits >> b & 1:
                            kk[ax] = n // 2
                    extra_k.append(kk)
                    extra_c.append(c[row] / 2**count)
                c[row] = c[row] / 2**count
            if extra_k:
                kint = np.concatenate([kint, np.array(extra_k)])
                c = np.concatenate([c, np.array(extra_c)])
    k = kint * (2 * np.pi / L)
    return TrigSeries(k.astype(float), c)

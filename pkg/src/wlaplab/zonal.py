"""Zonal (longitude-independent) functions on S^2 as Legendre series in t = cos(theta)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as L


@dataclass(frozen=True)
class LegendreSeries:
    """h(t) = sum_l coeffs[l] P_l(t) on [-1, 1]."""

    coeffs: tuple[float, ...]

    @classmethod
    def from_array(cls, c) -> "LegendreSeries":
        return cls(tuple(float(x) for x in np.asarray(c, dtype=float)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def __call__(self, t):
        return L.legval(t, self.array)

    def dt(self, t, order: int = 1):
        if len(self.coeffs) <= order:
            return np.zeros_like(np.asarray(t, dtype=float))
        return L.legval(t, L.legder(self.array, order))

    def round_laplacian(self) -> "LegendreSeries":
        """Laplacian on the unit round sphere: P_l -> -l(l+1) P_l."""
        ell = np.arange(len(self.coeffs))
        return LegendreSeries.from_array(-ell * (ell + 1) * self.array)

    def shifted(self, c0: float) -> "LegendreSeries":
        c = self.array.copy()
        if c.size == 0:
            c = np.zeros(1)
        c[0] += c0
        return LegendreSeries.from_array(c)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return L.leggauss(n)


def project(values_fn, degree: int, nodes: int | None = None) -> LegendreSeries:
    """Legendre coefficients of a smooth function on [-1, 1] up to `degree`."""
    nodes = nodes or 2 * degree + 16
    t, w = L.leggauss(nodes)
    vals = values_fn(t)
    ell = np.arange(degree + 1)
    P = L.legvander(t, degree)
    c = (2 * ell + 1) / 2.0 * (P.T @ (w * vals))
    return LegendreSeries.from_array(c)

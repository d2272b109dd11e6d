"""Eigenfunctions of -Delta_F at eigenvalue 1 versus holomorphic vector fields.

For u with Delta_F u = -u the field X = grad'u = g^{i jbar} d_jbar u d_i is
holomorphic, and the Futaki character can be read either from the
eigenfunction, f(X) = -int u omega, or from the Ricci potential,
f(X) = int XF omega.

Two kinds of input are supported:

* symbolic polynomials in (z, zbar) on C^n (``ComplexGaussian``);
* coefficient vectors in a :class:`~wlaplab.operators.FourierLatitudeGrid`
  on the S^1-symmetric CP^1, wrapped as :class:`FanoFunction`.

On CP^1 the affine chart is z = tan(theta/2) e^{i phi}; all per-mode
formulas use t = cos(theta), s = sin(theta) and the conformal factor w of
g = exp(2w) g_round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import NotOneEigenfunction, ParameterOutOfRange, PotentialUnavailable
from .geometry import ComplexFlat
from .operators import FourierLatitudeGrid, fano_mode_tables
from .spaces import ModelSpace, SpaceKind, complex_gaussian_rule, measure_density
from .zonal import gauss_legendre

EIGEN_TOL = 1e-6


@dataclass(frozen=True)
class FanoFunction:
    """u = sum_m sum_j c[m, j] s^|m| p_j(t) e^{i m phi} on the S^1-symmetric CP^1."""

    space: ModelSpace
    basis: FourierLatitudeGrid
    coeffs: np.ndarray

    @classmethod
    def from_spectrum(cls, result, index: int) -> "FanoFunction":
        op = result.operator
        return cls(op.space, op.basis, np.asarray(result.eigenvectors[:, index]))

    def __mul__(self, c) -> "FanoFunction":
        return FanoFunction(self.space, self.basis, self.coeffs * c)

    __rmul__ = __mul__

    def modes(self, t):
        """Yield (m, per-mode tables contracted with the coefficients)."""
        for m in self.basis.mode_list:
            c = self.coeffs[self.basis.block_of(m)]
            if not np.any(c):
                continue
            tab = fano_mode_tables(self.space, m, self.basis.degree, t)
            yield m, {k: (v @ c if k != "s" else v) for k, v in tab.items()}

    def values(self, nodes) -> np.ndarray:
        nodes = np.atleast_2d(nodes)
        t, phi = np.cos(nodes[:, 0]), nodes[:, 1]
        out = np.zeros(t.size, dtype=complex)
        for m in self.basis.mode_list:
            c = self.coeffs[self.basis.block_of(m)]
            if np.any(c):
                out += fano_mode_tables(self.space, m, self.basis.degree, t)["v"] @ c * np.exp(
                    1j * m * phi)
        return out


@dataclass(frozen=True)
class VectorFieldSamples:
    components: np.ndarray  # (Q, n) complex, X^i in the chart
    nodes: np.ndarray
    chart: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.components)):
            raise ValueError("vector field components must be finite")


@dataclass(frozen=True)
class HolomorphyReport:
    dbar_defect: float  # ||nabla'' nabla'' u||_{L^2(dmu)}
    eigen_residual: float  # ||Delta_F u + u||_{L^2(dmu)}
    tolerance: float
    norm: float  # ||u||_{L^2(dmu)}

    @property
    def verdict(self) -> str:
        ok = self.dbar_defect <= self.tolerance and self.eigen_residual <= self.tolerance
        return "PASS" if ok else "FAIL"

    def to_dict(self) -> dict:
        return {"check": "holomorphy", "dbar_defect": self.dbar_defect,
                "eigen_residual": self.eigen_residual, "tolerance": self.tolerance,
                "norm": self.norm, "verdict": self.verdict}


# ================================================================ C^n, symbolic input

def _flat(space: ModelSpace) -> ComplexFlat:
    if space.kind is not SpaceKind.COMPLEX_GAUSSIAN:
        raise ParameterOutOfRange("symbolic input is supported on complex-gaussian spaces")
    return ComplexFlat(space.complex_dim)


def _weighted_norm(space, geom, expr, rule) -> float:
    expr = sp.expand(expr)
    if expr == 0:
        return 0.0
    vals = geom.lambdify(expr)(rule.nodes)
    w = rule.weights * measure_density(space, rule.nodes)
    return math.sqrt(math.fsum((w * np.abs(vals) ** 2).tolist()))


# ================================================================ CP^1, per-mode formulas

def _fano_grid(fn: FanoFunction, points: int | None = None):
    t, tw = gauss_legendre(points or fn.basis.latitude_points)
    return t, tw


def _fano_mode_quantities(fn: FanoFunction, t):
    """Per mode: u, X^1 e^{-i(m+1) phi}, d-bar Hessian density, Delta_F u, Delta_dbar u, XF."""
    space = fn.space
    w = space.conformal(t)
    w_t = space.conformal.dt(t)
    F_t = space.potential.dt(t)
    s = np.sqrt(1 - t * t)
    e2w = np.exp(2 * w)
    for m, q in fn.modes(t):
        d1 = q["d1"]
        lap_dbar = 0.5 * q["lap0"] / e2w
        xf = -0.5 * s * F_t * d1 / e2w
        hess = 2.0 * np.exp(-2 * w) * (0.25 * q["e2"] + 0.5 * s * w_t * d1)
        x1 = d1 / (2 * e2w * 0.5 * (1 + t))  # cos^2(theta/2) = (1 + t) / 2
        yield m, dict(u=q["v"], d1=d1, hess=hess, lap_F=lap_dbar + xf, lap_dbar=lap_dbar,
                      xf=xf, x1=x1)


def _fano_integral(space, t, tw, per_mode_sq) -> float:
    """2 pi int |.|^2 exp(F + 2w) dt, summed over modes (orthogonal in phi)."""
    dens = np.exp(space.potential(t) + 2 * space.conformal(t))
    return 2 * math.pi * math.fsum((tw * dens * per_mode_sq).tolist())


# ================================================================ public API

def grad_prime(space: ModelSpace, u, nodes=None) -> VectorFieldSamples:
    """X^i = g^{i jbar} d_jbar u at `nodes` (complex points on C^n, (theta, phi) on CP^1)."""
    if isinstance(u, FanoFunction):
        if nodes is None:
            t, _ = gauss_legendre(u.basis.latitude_points)
            phi = 2 * np.pi * np.arange(8) / 8
            nodes = np.column_stack([np.repeat(np.arccos(t), 8), np.tile(phi, t.size)])
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        t, phi = np.cos(nodes[:, 0]), nodes[:, 1]
        comp = np.zeros(t.size, dtype=complex)
        for m, q in _fano_mode_quantities(u, t):
            comp += q["x1"] * np.exp(1j * (m + 1) * phi)
        return VectorFieldSamples(comp[:, None], nodes, "z = tan(theta/2) exp(i phi)")
    geom = _flat(space)
    u = sp.sympify(u)
    if nodes is None:
        nodes = complex_gaussian_rule(space, 4).nodes
    nodes = np.atleast_2d(np.asarray(nodes, dtype=complex))
    comps = np.column_stack([geom.lambdify(d)(nodes) if d != 0 else np.zeros(len(nodes), complex)
                             for d in geom.dbar(u)])
    return VectorFieldSamples(comps, nodes, "C^n")


def holomorphy_defect(space: ModelSpace, u, tol: float = EIGEN_TOL,
                      points: int = 10) -> HolomorphyReport:
    """||nabla''nabla'' u|| and ||Delta_F u + u|| in L^2(exp(F) dV)."""
    if isinstance(u, FanoFunction):
        t, tw = _fano_grid(u)
        hess = res = norm = 0.0
        for _, q in _fano_mode_quantities(u, t):
            hess += _fano_integral(space, t, tw, np.abs(q["hess"]) ** 2)
            res += _fano_integral(space, t, tw, np.abs(q["lap_F"] + q["u"]) ** 2)
            norm += _fano_integral(space, t, tw, np.abs(q["u"]) ** 2)
        return HolomorphyReport(math.sqrt(hess), math.sqrt(res), tol, math.sqrt(norm))
    geom = _flat(space)
    u = sp.sympify(u)
    rule = complex_gaussian_rule(space, points)
    hess_sq = sum(sp.diff(u, a, b) * geom.conj(sp.diff(u, a, b)) for a in geom.zb for b in geom.zb)
    w = rule.weights * measure_density(space, rule.nodes)
    hv = geom.lambdify(sp.expand(hess_sq))(rule.nodes).real if hess_sq != 0 else np.zeros(rule.size)
    hess = math.sqrt(max(math.fsum((w * hv).tolist()), 0.0))
    res = _weighted_norm(space, geom, geom.delta_F(u) + u, rule)
    norm = _weighted_norm(space, geom, u, rule)
    return HolomorphyReport(hess, res, tol, norm)


def _require_fano(space: ModelSpace):
    if space.kind is not SpaceKind.FANO_CP1 or space.potential is None:
        raise PotentialUnavailable("Futaki integrals need a fano-cp1 space with its Ricci potential")


def futaki_from_eigenfunction(space: ModelSpace, u: FanoFunction, tol: float = EIGEN_TOL,
                              points: int | None = None) -> complex:
    """-int u omega over CP^1 (area form of the metric, no weight)."""
    _require_fano(space)
    if not isinstance(u, FanoFunction):
        raise ParameterOutOfRange("expected a FanoFunction")
    rep = holomorphy_defect(space, u, tol)
    if rep.norm == 0 or rep.eigen_residual > tol * max(rep.norm, 1.0):
        raise NotOneEigenfunction(f"||Delta_F u + u|| = {rep.eigen_residual:.2e}")
    t, tw = _fano_grid(u, points)
    c = u.coeffs[u.basis.block_of(0)]
    v0 = fano_mode_tables(space, 0, u.basis.degree, t)["v"] @ c
    area = tw * np.exp(2 * space.conformal(t))
    re = math.fsum((area * v0.real).tolist())
    im = math.fsum((area * v0.imag).tolist())
    return -2 * math.pi * complex(re, im)


def rotation_eigenfunction(space: ModelSpace, result) -> FanoFunction:
    """The lambda = 1 eigenfunction whose grad' is the rotation field z d/dz.

    Picks the Fourier-mode-0 member of the first nonzero cluster and scales it
    so that X^1 / z = -exp(-2w) u_t equals 1.
    """
    from .eigensolve import first_nonzero_cluster

    cluster = first_nonzero_cluster(result)
    members = [i for i in cluster.members if result.labels and result.labels[i] == 0]
    if not members:
        raise NotOneEigenfunction("no S^1-invariant member in the first nonzero cluster")
    fn = FanoFunction.from_spectrum(result, members[0])
    t, tw = _fano_grid(fn)
    q = next(q for m, q in fn.modes(t) if m == 0)
    ratio = -np.exp(-2 * space.conformal(t)) * q["v_t"]
    scale = complex(np.sum(tw * ratio) / np.sum(tw * ratio * np.conj(ratio))).conjugate()
    return fn * scale


def futaki_from_potential(space: ModelSpace, X: FanoFunction | None = None,
                          points: int = 256) -> complex:
    """int XF omega for X = grad'u (or the rotation field z d/dz when X is None)."""
    _require_fano(space)
    t, tw = gauss_legendre(points)
    area = tw * np.exp(2 * space.conformal(t))
    F_t = space.potential.dt(t)
    if X is None:
        xf = -0.5 * (1 - t * t) * F_t
        return complex(2 * math.pi * math.fsum((area * xf).tolist()), 0.0)
    total = 0j
    for m, q in _fano_mode_quantities(X, t):
        if m == 0:
            total += complex(math.fsum((area * q["xf"].real).tolist()),
                             math.fsum((area * q["xf"].imag).tolist()))
    return 2 * math.pi * total


def moment_relation_residual(space: ModelSpace, u: FanoFunction) -> float:
    """max |XF + Delta_dbar u + u| over latitude nodes for X = grad'u, summed over modes."""
    t, _ = _fano_grid(u)
    worst = 0.0
    for _, q in _fano_mode_quantities(u, t):
        worst = max(worst, float(np.max(np.abs(q["xf"] + q["lap_dbar"] + q["u"]))))
    return worst


def field_gram(space: ModelSpace, functions, points: int | None = None) -> np.ndarray:
    """Gram matrix of int g(grad'u_a, conj grad'u_b) dmu for a list of inputs."""
    k = len(functions)
    G = np.zeros((k, k), dtype=complex)
    if functions and isinstance(functions[0], FanoFunction):
        t, tw = _fano_grid(functions[0], points)
        dens = np.exp(space.potential(t)) * tw
        per = []
        for fn in functions:
            per.append({m: q["d1"] for m, q in _fano_mode_quantities(fn, t)})
        for a in range(k):
            for b in range(k):
                s = 0j
                for m, da in per[a].items():
                    if m in per[b]:
                        s += 0.5 * np.sum(dens * da * np.conj(per[b][m]))
                G[a, b] = 2 * math.pi * s
        return G
    geom = _flat(space)
    rule = complex_gaussian_rule(space, 10)
    w = rule.weights * measure_density(space, rule.nodes)
    fields = [grad_prime(space, f, rule.nodes).components for f in functions]
    for a in range(k):
        for b in range(k):
            G[a, b] = np.sum(w[:, None] * fields[a] * np.conj(fields[b]))
    del geom
    return G

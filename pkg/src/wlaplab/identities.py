"""Residual checks of the analytic identities behind the spectral bounds.

* Bakry-Emery Weitzenbock formula (real convention)
      1/2 Delta_f |grad u|^2 = <grad u, grad Delta_f u> + |Hess u|^2 + Ric_f(grad u, grad u)
  checked in the doubled form used below.
* The complex integral identity
      -int <dbar Delta_F u, dbar u> dmu = int (|nabla'' nabla'' u|^2 + |dbar u|^2) dmu.
* The soliton identity Delta_f f + 2 lambda f = 0 after fixing the additive constant of f.
* The log-Sobolev deficit C int |grad u|^2 dmu - int u^2 log u^2 dmu with C = 2 / lambda.
"""
from __future__ import annotations

import math

import numpy as np
import sympy as sp

from .errors import (NonIntegrable, NormalizationViolated, NotASoliton, ParameterOutOfRange,
                     SymbolicDerivativeUnavailable)
from .geometry import ComplexFlat, EmbeddedGeometry
from .operators import harmonic_polynomials
from .reports import IdentityReport, residual_report
from .spaces import (ModelSpace, QuadratureRule, SpaceKind, complex_gaussian_rule, hermite_rule,
                     measure_density, product_rule, sphere_rule, truncation_radius)
from .zonal import gauss_legendre

IDENTITY_TOL = 1e-8


# ---------------------------------------------------------------- helpers

def harmonic_expressions(space: ModelSpace, ell: int) -> list:
    """Exact degree-ell harmonic polynomials in the ambient coordinates of the sphere (factor)."""
    geom = EmbeddedGeometry(space)
    exps, ker = harmonic_polynomials(space.sphere_dim, ell)
    out = []
    for j in range(ker.shape[1]):
        out.append(sp.Add(*[ker[i, j] * sp.Mul(*[x**e for x, e in zip(geom.x, ex)])
                            for i, ex in enumerate(exps)]))
    return out


def _default_real_rule(space: ModelSpace, points: int = 10) -> QuadratureRule:
    if space.kind is SpaceKind.GAUSSIAN:
        return hermite_rule(space, points)
    if space.kind is SpaceKind.SPHERE:
        return sphere_rule(space, 2 * points)
    return product_rule(space, 2 * points, points)


# ---------------------------------------------------------------- Bochner-Weitzenbock

def bochner_terms(space: ModelSpace, u):
    """Symbolic pieces of the formula; returns (lhs, rhs) with lhs = Delta_f |grad u|^2."""
    if space.is_complex:
        raise SymbolicDerivativeUnavailable("the real Weitzenbock formula needs a real space")
    geom = EmbeddedGeometry(space)
    u = sp.sympify(u)
    g = geom.grad(u)
    lhs = geom.weighted_lap(geom.dot(g, g))
    H = geom.hess(u)
    hess_sq = sum(H[i, j] ** 2 for i in range(H.rows) for j in range(H.cols))
    ric = (g.T * geom.ricci_f * g)[0, 0]
    rhs = 2 * geom.dot(g, geom.grad(geom.weighted_lap(u))) + 2 * hess_sq + 2 * ric
    return geom, lhs, rhs


def bochner_residual_real(space: ModelSpace, u, rule: QuadratureRule | None = None,
                          tol: float = IDENTITY_TOL) -> IdentityReport:
    """Delta_f |grad u|^2 - 2 <grad u, grad Delta_f u> - 2 |Hess u|^2 - 2 Ric_f(grad u, grad u)."""
    geom, lhs, rhs = bochner_terms(space, u)
    resid = sp.expand(lhs - rhs)
    rule = rule or _default_real_rule(space)
    vals = geom.lambdify(resid)(rule.nodes) if resid != 0 else np.zeros(rule.size)
    w = rule.weights * measure_density(space, rule.nodes)
    return residual_report("bochner_weitzenbock", vals, w, tol,
                           f"{rule.size} nodes on {space.describe()}, u = {sp.sstr(u)}",
                           symbolic_zero=bool(resid == 0))


# ---------------------------------------------------------------- complex identity

def _complex_sides(space: ModelSpace, u, rule: QuadratureRule):
    geom = ComplexFlat(space.complex_dim)
    du = geom.dbar(u)
    dlap = geom.dbar(geom.delta_F(u))
    lhs_int = -sum(a * geom.conj(b) for a, b in zip(dlap, du))
    hess_int = sum(sp.diff(u, a, b) * geom.conj(sp.diff(u, a, b))
                   for a in geom.zb for b in geom.zb)
    grad_int = sum(a * geom.conj(a) for a in du)
    w = rule.weights * measure_density(space, rule.nodes)

    def integrate(expr):
        expr = sp.expand(expr)
        if expr == 0:
            return 0j
        vals = geom.lambdify(expr)(rule.nodes)
        return complex(math.fsum((w * vals.real).tolist()), math.fsum((w * vals.imag).tolist()))

    return integrate(lhs_int), integrate(hess_int), integrate(grad_int)


def complex_identity_residual(space: ModelSpace, u, rule: QuadratureRule | None = None,
                              tol: float = IDENTITY_TOL, points: int = 8) -> IdentityReport:
    """|LHS - RHS| / (1 + |RHS|) for the weighted d-bar integral identity.

    Integrals use a Gauss-Hermite rule in the 2n real coordinates; a second rule
    with four more points per axis must reproduce them, else the integrand is
    judged not integrable at this resolution.
    """
    if not space.is_complex:
        raise ParameterOutOfRange("complex identity needs a complex-convention space")
    u = sp.sympify(u)
    if not u.free_symbols:
        return IdentityReport("complex_integral_identity", 0.0, 0.0, tol,
                              "constant u: both sides vanish", {"lhs": 0.0, "rhs": 0.0,
                                                                "hessian_term": 0.0})
    if space.kind is not SpaceKind.COMPLEX_GAUSSIAN:
        raise SymbolicDerivativeUnavailable("symbolic complex identity is offered on C^n")
    rule = rule or complex_gaussian_rule(space, points)
    lhs, hess, grad = _complex_sides(space, u, rule)
    finer = complex_gaussian_rule(space, points + 4)
    lhs2, hess2, grad2 = _complex_sides(space, u, finer)
    rhs, rhs2 = hess + grad, hess2 + grad2
    drift = max(abs(lhs - lhs2), abs(rhs - rhs2)) / (1 + abs(rhs2))
    if drift > tol:
        raise NonIntegrable(f"quadrature not converged (relative drift {drift:.2e})")
    r = abs(lhs - rhs) / (1 + abs(rhs))
    return IdentityReport("complex_integral_identity", float(r), float(r), tol,
                          f"{rule.size}-node Gauss-Hermite on {space.describe()}, u = {sp.sstr(u)}",
                          {"lhs": [lhs.real, lhs.imag], "rhs": [rhs.real, rhs.imag],
                           "hessian_term": hess.real, "gradient_term": grad.real})


# ---------------------------------------------------------------- soliton identity

def soliton_identity_residual(space: ModelSpace, *, allow_product: bool = False,
                              rule: QuadratureRule | None = None,
                              tol: float = 1e-12) -> IdentityReport:
    """Find c with Delta_f (f - c) + 2 lambda (f - c) = 0 and report the residual after the shift.

    Only Gaussian spaces qualify by default; product spaces, which also satisfy
    Ric_f = g / 2, are accepted with ``allow_product=True``.
    """
    if space.kind is SpaceKind.PRODUCT and not allow_product:
        raise NotASoliton("product spaces need allow_product=True")
    if space.kind not in (SpaceKind.GAUSSIAN, SpaceKind.PRODUCT):
        raise NotASoliton(f"{space.kind.value} is not a gradient shrinking soliton in the catalog")
    geom = EmbeddedGeometry(space)
    lam = sp.nsimplify(space.flat_lambda, rational=True)
    raw = sp.simplify(geom.weighted_lap(geom.f) + 2 * lam * geom.f)
    if raw.free_symbols:
        raise NotASoliton(f"Delta_f f + 2 lambda f = {raw} is not constant")
    c = raw / (2 * lam)
    resid = sp.simplify(geom.weighted_lap(geom.f - c) + 2 * lam * (geom.f - c))
    rule = rule or _default_real_rule(space)
    vals = geom.lambdify(resid)(rule.nodes)
    w = rule.weights * measure_density(space, rule.nodes)
    return residual_report("soliton_identity", vals, w, tol,
                           f"{rule.size} nodes on {space.describe()}",
                           normalization_constant=float(c), normalization_exact=str(c),
                           raw_residual=float(raw))


# ---------------------------------------------------------------- log-Sobolev

def _gaussian_axis_rule(lam: float, breaks_extra, panels: int, order: int):
    """Composite Gauss-Legendre on [-R, R] with probability weights of N(0, 1/lam)."""
    R = truncation_radius(lam)
    g, gw = gauss_legendre(order)
    e = np.asarray(sorted(set(list(np.linspace(-R, R, panels + 1))
                              + [r for r in breaks_extra if -R < r < R])))
    h = np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    x = (mid[:, None] + 0.5 * h[:, None] * g[None, :]).ravel()
    w = (0.5 * h[:, None] * gw[None, :]).ravel() * np.exp(-0.5 * lam * x**2)
    return x, w / math.sqrt(2 * math.pi / lam)


def lsi_integrals(space: ModelSpace, u, panels: int = 400, order: int = 10):
    """(int u^2, int |grad u|^2, int u^2 log u^2) against the probability-normalized measure.

    On Gaussian spaces the measure is a product of probability measures, so
    coordinates absent from u integrate to one and only the active ones are
    discretized; in one active variable the panels are split at the zeros of u.
    """
    if space.is_complex or space.kind is SpaceKind.PRODUCT:
        raise ParameterOutOfRange("log-Sobolev checks are offered on Gaussian and sphere spaces")
    geom = EmbeddedGeometry(space)
    u = sp.sympify(u)
    if space.kind is SpaceKind.GAUSSIAN:
        active = [c for c in geom.coords if c in u.free_symbols]
        grad_sq = sum(sp.diff(u, c) ** 2 for c in active)
        if not active:
            val = float(u)
            return val * val, 0.0, (val * val * math.log(val * val) if val else 0.0)
        roots = []
        if len(active) == 1:
            try:
                roots = [float(r) for r in sp.Poly(u, active[0]).real_roots()]
            except sp.PolynomialError:
                roots = []
        else:
            panels = max(panels // 4 ** (len(active) - 1), 40)
        x, w1 = _gaussian_axis_rule(space.lam, roots, panels, order)
        grids = np.meshgrid(*([x] * len(active)), indexing="ij")
        w = w1
        for _ in range(len(active) - 1):
            w = np.multiply.outer(w, w1)
        w = w.ravel()
        args = [gr.ravel() for gr in grids]
        ev = lambda e: np.broadcast_to(np.asarray(sp.lambdify(active, e, "numpy")(*args),  # noqa: E731
                                                  dtype=float), w.shape)
        uv, gv = ev(u), ev(grad_sq)
    else:
        rule = sphere_rule(space, 40)
        w = rule.weights / math.fsum(rule.weights.tolist())
        g = geom.grad(u)
        uv = geom.lambdify(u)(rule.nodes)
        gv = geom.lambdify(geom.dot(g, g))(rule.nodes)
    u2 = uv * uv
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(u2 > 0, u2 * np.log(np.where(u2 > 0, u2, 1.0)), 0.0)
    s = lambda a: math.fsum((w * a).tolist())  # noqa: E731
    return s(u2), s(gv), s(ent)


def normalize_lsi(space: ModelSpace, u):
    """Scale u so that int u^2 dmu = 1 for the probability-normalized measure."""
    m2, _, _ = lsi_integrals(space, u)
    return sp.sympify(u) / sp.sqrt(sp.Float(m2, 30))


def lsi_deficit(space: ModelSpace, u, C: float | None = None, tol: float = IDENTITY_TOL,
                norm_tol: float = 1e-8) -> IdentityReport:
    """C int |grad u|^2 - int u^2 log u^2, C = 2 / lambda; PASS iff the deficit >= -tol.

    The measure is exp(-f) dV rescaled to total mass one, which is the
    normalization under which constants give equality.
    """
    lam = space.ric_f_lower_bound
    if lam is None or lam <= 0:
        raise ParameterOutOfRange("log-Sobolev needs a positive Bakry-Emery bound")
    C = 2.0 / lam if C is None else C
    m2, energy, entropy = lsi_integrals(space, u)
    if abs(m2 - 1.0) > norm_tol:
        raise NormalizationViolated(f"int u^2 dmu = {m2!r}, expected 1")
    deficit = C * energy - entropy
    neg = max(-deficit, 0.0)
    return IdentityReport("log_sobolev_deficit", neg, neg, tol,
                          f"composite Gauss-Legendre on {space.describe()}, u = {sp.sstr(u)}",
                          {"deficit": deficit, "constant": C, "energy": energy,
                           "entropy": entropy, "mass": m2})

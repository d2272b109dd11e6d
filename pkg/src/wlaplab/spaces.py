"""Catalog of model metric measure spaces, their weights and quadrature rules.

Real spaces carry the measure ``exp(-f) dV``; complex (Kahler) spaces carry
``exp(F) dV``.  The two sign conventions are kept apart on purpose: the
formulas downstream are written in whichever one the space uses.

Descriptors use a small ``kind:key=val,key=val`` language::

    gaussian:n=2,lambda=0.5
    sphere:n=2,r=1            (add convention=complex for the d-bar Laplacian, n=2 only)
    product:n=3,k=1
    complex-gaussian:n=2
    fano-cp1:pert=0.2;-0.1    (zonal Legendre coefficients, l = 1, 2, ...)
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .errors import ParameterOutOfRange, PointOutsideChart, TruncationInsufficient, UnknownKind
from .zonal import LegendreSeries, gauss_legendre

# boundary weight density relative to its maximum, for truncated Gaussian charts
TRUNCATION_DENSITY_RATIO = 1e-12
FANO_MAX_PERTURBATION_DEGREE = 8
FANO_MAX_PERTURBATION_L1 = 1.0


class SpaceKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SPHERE = "sphere"
    PRODUCT = "product"
    COMPLEX_GAUSSIAN = "complex-gaussian"
    FANO_CP1 = "fano-cp1"


class Convention(str, enum.Enum):
    REAL = "real"  # dmu = exp(-f) dV
    COMPLEX = "complex"  # dmu = exp(F) dV


@dataclass(frozen=True)
class ModelSpace:
    kind: SpaceKind
    real_dimension: int
    weight_sign_convention: Convention
    ric_f_lower_bound: float | None
    lam: float | None = None  # Gaussian curvature constant, f = lam |x|^2 / 2
    radius: float | None = None  # sphere (factor) radius
    sphere_dim: int = 0  # dimension m of the sphere factor S^m, 0 if absent
    flat_dim: int = 0  # number of Euclidean coordinates carrying a Gaussian weight
    complex_dim: int = 0
    perturbation: tuple[float, ...] = ()
    # FanoCP1: conformal factor w(t), metric exp(2w) g_round, and Ricci potential F(t)
    conformal: LegendreSeries | None = field(default=None, repr=False)
    potential: LegendreSeries | None = field(default=None, repr=False)

    @property
    def is_complex(self) -> bool:
        return self.weight_sign_convention is Convention.COMPLEX

    @property
    def flat_lambda(self) -> float:
        """Coefficient a in the flat weight a |t|^2 / 2."""
        if self.kind is SpaceKind.GAUSSIAN:
            return float(self.lam)
        if self.kind is SpaceKind.PRODUCT:
            return 0.5
        raise AttributeError(f"{self.kind.value} has no flat Gaussian factor")

    def describe(self) -> str:
        k = self.kind
        if k is SpaceKind.GAUSSIAN:
            return f"gaussian:n={self.real_dimension},lambda={self.lam!r}"
        if k is SpaceKind.SPHERE:
            s = f"sphere:n={self.sphere_dim},r={self.radius!r}"
            return s + (",convention=complex" if self.is_complex else "")
        if k is SpaceKind.PRODUCT:
            return f"product:n={self.real_dimension},k={self.flat_dim}"
        if k is SpaceKind.COMPLEX_GAUSSIAN:
            return f"complex-gaussian:n={self.complex_dim}"
        pert = ";".join(repr(c) for c in self.perturbation) or "0"
        return f"fano-cp1:pert={pert}"


# ---------------------------------------------------------------- descriptors

def parse_descriptor(text: str) -> tuple[str, dict[str, str]]:
    text = text.strip()
    kind, _, rest = text.partition(":")
    params: dict[str, str] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ParameterOutOfRange(f"malformed parameter {item!r} in {text!r}")
        params[key.strip()] = val.strip()
    return kind.strip(), params


def _int(params, key, default=None) -> int:
    if key not in params:
        if default is None:
            raise ParameterOutOfRange(f"missing parameter {key!r}")
        return default
    try:
        return int(params[key])
    except ValueError as exc:
        raise ParameterOutOfRange(f"{key}={params[key]!r} is not an integer") from exc


def _float(params, key, default=None) -> float:
    if key not in params:
        if default is None:
            raise ParameterOutOfRange(f"missing parameter {key!r}")
        return default
    try:
        return float(params[key])
    except ValueError as exc:
        raise ParameterOutOfRange(f"{key}={params[key]!r} is not a number") from exc


def make_space(descriptor) -> ModelSpace:
    """Build a catalog space from a descriptor string or a ``(kind, params)`` pair."""
    if isinstance(descriptor, str):
        kind, params = parse_descriptor(descriptor)
    elif isinstance(descriptor, dict):
        params = {k: (";".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v))
                  for k, v in descriptor.items() if k != "kind"}
        kind = descriptor["kind"]
    else:
        kind, params = descriptor
    try:
        kind = SpaceKind(kind)
    except ValueError as exc:
        raise UnknownKind(f"unknown space kind {kind!r}") from exc

    if kind is SpaceKind.GAUSSIAN:
        n, lam = _int(params, "n"), _float(params, "lambda", 0.5)
        if n < 1 or lam <= 0:
            raise ParameterOutOfRange("gaussian needs n >= 1 and lambda > 0")
        return ModelSpace(kind, n, Convention.REAL, lam, lam=lam, flat_dim=n)

    if kind is SpaceKind.SPHERE:
        n, r = _int(params, "n"), _float(params, "r", 1.0)
        conv = Convention(params.get("convention", "real"))
        if n < 2 or r <= 0:
            raise ParameterOutOfRange("sphere needs n >= 2 and r > 0")
        if conv is Convention.COMPLEX:
            if n != 2:
                raise ParameterOutOfRange("complex convention needs the 2-sphere")
            # F = 0: the d-bar Laplacian bound of the Fano case
            return ModelSpace(kind, 2, conv, 1.0 / r**2, radius=r, sphere_dim=2, complex_dim=1)
        return ModelSpace(kind, n, conv, (n - 1) / r**2, radius=r, sphere_dim=n)

    if kind is SpaceKind.PRODUCT:
        n, k = _int(params, "n"), _int(params, "k")
        if k < 1 or n - k < 2:
            raise ParameterOutOfRange(f"product needs k >= 1 and n - k >= 2 (got n={n}, k={k})")
        m = n - k
        return ModelSpace(kind, n, Convention.REAL, 0.5, radius=math.sqrt(2 * (m - 1)),
                          sphere_dim=m, flat_dim=k)

    if kind is SpaceKind.COMPLEX_GAUSSIAN:
        n = _int(params, "n")
        if n < 1:
            raise ParameterOutOfRange("complex-gaussian needs n >= 1")
        return ModelSpace(kind, 2 * n, Convention.COMPLEX, 1.0, complex_dim=n)

    # FanoCP1
    raw = params.get("pert", "0")
    try:
        pert = tuple(float(x) for x in raw.replace(" ", ";").split(";") if x)
    except ValueError as exc:
        raise ParameterOutOfRange(f"bad perturbation list {raw!r}") from exc
    while pert and pert[-1] == 0.0:
        pert = pert[:-1]
    if len(pert) > FANO_MAX_PERTURBATION_DEGREE:
        raise ParameterOutOfRange(f"at most {FANO_MAX_PERTURBATION_DEGREE} zonal coefficients")
    if sum(abs(c) for c in pert) > FANO_MAX_PERTURBATION_L1:
        raise ParameterOutOfRange(f"perturbation l1 norm must be <= {FANO_MAX_PERTURBATION_L1}")
    space = ModelSpace(kind, 2, Convention.COMPLEX, 1.0, complex_dim=1, perturbation=pert,
                       conformal=conformal_factor(pert))
    from .operators import ricci_potential_cp1

    return replace(space, potential=ricci_potential_cp1(space).potential)


def conformal_factor(pert) -> LegendreSeries:
    """w(t) = w0 + sum_l c_l P_l(t), with w0 fixing the area of exp(2w) g_round to 4 pi."""
    c = np.concatenate([[0.0], np.asarray(pert, dtype=float)])
    if not np.any(c):
        return LegendreSeries((0.0,))
    t, wq = gauss_legendre(256)
    series = LegendreSeries.from_array(c)
    integral = math.fsum(wq * np.exp(2 * series(t)))  # int exp(2w) dt must equal 2
    return series.shifted(-0.5 * math.log(integral / 2.0))


# ---------------------------------------------------------------- weights

def weight_values(space: ModelSpace, nodes) -> np.ndarray:
    """f (real convention) or F (complex convention) at an array of chart points."""
    k = space.kind
    x = np.asarray(nodes)
    if k is SpaceKind.GAUSSIAN:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return 0.5 * space.lam * np.sum(x * x, axis=1)
    if k is SpaceKind.SPHERE:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.zeros(x.shape[0])
    if k is SpaceKind.PRODUCT:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = x[:, space.sphere_dim + 1:]
        return 0.25 * np.sum(t * t, axis=1)
    if k is SpaceKind.COMPLEX_GAUSSIAN:
        z = np.atleast_2d(np.asarray(x, dtype=complex))
        return -np.sum(np.abs(z) ** 2, axis=1)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return space.potential(np.cos(x[:, 0]))


def _check_point(space: ModelSpace, point) -> np.ndarray:
    p = np.asarray(point)
    k = space.kind
    expected = {
        SpaceKind.GAUSSIAN: space.real_dimension,
        SpaceKind.SPHERE: space.sphere_dim + 1,
        SpaceKind.PRODUCT: space.sphere_dim + 1 + space.flat_dim,
        SpaceKind.COMPLEX_GAUSSIAN: space.complex_dim,
        SpaceKind.FANO_CP1: 2,
    }[k]
    if p.shape != (expected,) or not np.all(np.isfinite(p)):
        raise PointOutsideChart(f"{space.describe()} expects a finite point of length {expected}")
    if k in (SpaceKind.SPHERE, SpaceKind.PRODUCT):
        r = np.linalg.norm(p[: space.sphere_dim + 1])
        if abs(r - space.radius) > 1e-9 * space.radius:
            raise PointOutsideChart(f"point is off the sphere of radius {space.radius}")
    if k is SpaceKind.FANO_CP1 and not (0.0 <= p[0] <= math.pi):
        raise PointOutsideChart("latitude theta must lie in [0, pi]")
    return p


def weight_at(space: ModelSpace, point) -> float:
    p = _check_point(space, point)
    return float(weight_values(space, p[None, :])[0])


def measure_density(space: ModelSpace, nodes) -> np.ndarray:
    """exp(-f) or exp(F) at the nodes."""
    w = weight_values(space, nodes)
    return np.exp(w) if space.is_complex else np.exp(-w)


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes in the chart and positive weights carrying the Riemannian volume only."""

    nodes: np.ndarray
    weights: np.ndarray
    chart: str
    factors: tuple["QuadratureRule", ...] = ()
    truncation_radius: float | None = None
    tail_mass: float = 0.0  # estimated relative weighted mass outside the chart domain
    exact_degree: int | None = None

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be strictly positive")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.weights.size


def _tensor(rules: list[QuadratureRule], chart: str, **kw) -> QuadratureRule:
    nodes = rules[0].nodes
    weights = rules[0].weights
    for r in rules[1:]:
        na, nb = nodes.shape[0], r.nodes.shape[0]
        nodes = np.hstack([np.repeat(nodes, nb, axis=0), np.tile(r.nodes, (na, 1))])
        weights = np.outer(weights, r.weights).ravel()
    return QuadratureRule(nodes, weights, chart, factors=tuple(rules), **kw)


def truncation_radius(lam: float, ratio: float = TRUNCATION_DENSITY_RATIO) -> float:
    """R with exp(-lam R^2 / 2) = ratio."""
    return math.sqrt(-2.0 * math.log(ratio) / lam)


def hermite_rule_1d(lam: float, points: int) -> QuadratureRule:
    """Gauss-Hermite nodes for the weight exp(-lam x^2/2), weights divided by that density."""
    y, w = special.roots_hermitenorm(points)
    x = y / math.sqrt(lam)
    # w exp(y^2/2) / sqrt(lam): volume weights; exp(-lam x^2/2) restores the GH weight
    vol = w * np.exp(0.5 * y * y) / math.sqrt(lam)
    return QuadratureRule(x[:, None], vol, "cartesian", exact_degree=2 * points - 1)


def hermite_rule(space: ModelSpace, points: int) -> QuadratureRule:
    """Untruncated Gaussian rule on the flat coordinates, exact for polynomials."""
    lam = space.flat_lambda
    one = hermite_rule_1d(lam, points)
    return _tensor([one] * space.flat_dim, "cartesian", exact_degree=one.exact_degree)


def truncated_rule(space: ModelSpace, panels: int, order: int = 8,
                   radius: float | None = None) -> QuadratureRule:
    """Composite Gauss-Legendre on the cube [-R, R]^k of the flat coordinates."""
    lam = space.flat_lambda
    R = truncation_radius(lam) if radius is None else radius
    g, gw = gauss_legendre(order)
    edges = np.linspace(-R, R, panels + 1)
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + 0.5 * h[:, None] * g[None, :]).ravel()
    w = (0.5 * h[:, None] * gw[None, :]).ravel()
    one = QuadratureRule(x[:, None], w, "cartesian", truncation_radius=R)
    k = space.flat_dim
    tail = 1.0 - special.erf(R * math.sqrt(lam / 2.0)) ** k
    return _tensor([one] * k, "cartesian", truncation_radius=R, tail_mass=tail)


def sphere_rule_unit(m: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit S^m in ambient coordinates, exact up to `degree`."""
    if m == 1:
        npts = degree + 1
        phi = 2 * np.pi * np.arange(npts) / npts
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(npts, 2 * np.pi / npts)
    sub, subw = sphere_rule_unit(m - 1, degree)
    a = 0.5 * (m - 2)
    nt = degree // 2 + 1
    t, tw = special.roots_jacobi(nt, a, a)
    s = np.sqrt(1.0 - t * t)
    nodes = np.hstack([np.repeat(t, sub.shape[0])[:, None],
                       np.repeat(s, sub.shape[0])[:, None] * np.tile(sub, (nt, 1))])
    return nodes, np.outer(tw, subw).ravel()


def sphere_rule(space: ModelSpace, degree: int) -> QuadratureRule:
    m, r = space.sphere_dim, space.radius
    nodes, w = sphere_rule_unit(m, degree)
    return QuadratureRule(r * nodes, w * r**m, "ambient-sphere", exact_degree=degree)


def product_rule(space: ModelSpace, sphere_degree: int, hermite_points: int) -> QuadratureRule:
    srule = sphere_rule(space, sphere_degree)
    flat = hermite_rule(space, hermite_points)
    return _tensor([srule, flat], "ambient-sphere x cartesian")


def complex_gaussian_rule(space: ModelSpace, points: int) -> QuadratureRule:
    """Gauss-Hermite in each real coordinate of C^n; nodes are complex (N, n)."""
    y, w = special.roots_hermite(points)
    vol = w * np.exp(y * y)
    n = space.complex_dim
    one = QuadratureRule(y[:, None], vol, "cartesian")
    real = _tensor([one] * (2 * n), "cartesian")
    x = real.nodes
    z = x[:, 0::2] + 1j * x[:, 1::2]
    return QuadratureRule(z, real.weights.copy(), "complex", exact_degree=2 * points - 1)


def fano_rule(space: ModelSpace, latitude_points: int = 96,
              longitude_points: int = 16) -> QuadratureRule:
    """(theta, phi) rule; weights are the area element of exp(2w) g_round."""
    t, tw = gauss_legendre(latitude_points)
    phi = 2 * np.pi * np.arange(longitude_points) / longitude_points
    area = tw * np.exp(2 * space.conformal(t))
    nodes = np.column_stack([np.repeat(np.arccos(t), longitude_points),
                             np.tile(phi, latitude_points)])
    weights = np.outer(area, np.full(longitude_points, 2 * np.pi / longitude_points)).ravel()
    return QuadratureRule(nodes, weights, "latitude-longitude")


def default_rule(space: ModelSpace, resolution: int = 40) -> QuadratureRule:
    k = space.kind
    if k is SpaceKind.GAUSSIAN:
        return hermite_rule(space, resolution)
    if k is SpaceKind.SPHERE:
        return sphere_rule(space, 2 * resolution)
    if k is SpaceKind.PRODUCT:
        return product_rule(space, 2 * min(resolution, 16), resolution)
    if k is SpaceKind.COMPLEX_GAUSSIAN:
        return complex_gaussian_rule(space, min(resolution, 12))
    return fano_rule(space, max(resolution, 64), 16)


def weighted_volume(space: ModelSpace, rule: QuadratureRule, tol: float = 1e-12) -> float:
    """Integral of the weighted density exp(-f) (or exp(F)) over the rule's domain."""
    if rule.tail_mass > tol:
        raise TruncationInsufficient(
            f"estimated truncated tail {rule.tail_mass:.3e} exceeds tolerance {tol:.1e}")
    vals = rule.weights * measure_density(space, rule.nodes)
    return math.fsum(vals.tolist())


# ---------------------------------------------------------------- catalog text

CATALOG = {
    "gaussian": dict(
        params="n >= 1, lambda > 0 (default 0.5)",
        weight="f = lambda |x|^2 / 2 on flat R^n",
        bound="Ric_f >= lambda",
        spectrum="closed form: {k * lambda}, multiplicity C(k+n-1, n-1)",
    ),
    "sphere": dict(
        params="n >= 2, r > 0 (default 1), convention=real|complex (complex: n = 2)",
        weight="f = 0",
        bound="Ric_f >= (n-1)/r^2 (complex convention: 1/r^2)",
        spectrum="closed form: l(l+n-1)/r^2 (complex convention: l(l+1)/(2 r^2))",
    ),
    "product": dict(
        params="k >= 1, n - k >= 2",
        weight="S^{n-k}(sqrt(2(n-k-1))) x R^k with f = |t|^2/4",
        bound="Ric_f >= 1/2",
        spectrum="closed form: sphere l(l+n-k-1)/r^2 plus j/2",
    ),
    "complex-gaussian": dict(
        params="n >= 1 (complex dimension)",
        weight="F = -|z|^2 on C^n, measure exp(F) dV",
        bound="lambda_1(Delta_F) >= 1",
        spectrum="closed form on monomials z^a zbar^b: |b|; the 1-eigenspace grows with truncation",
    ),
    "fano-cp1": dict(
        params="pert = up to 8 zonal coefficients separated by ';', l1 norm <= 1",
        weight="Ricci potential F of the S^1-symmetric metric of area 4 pi",
        bound="lambda_1(Delta_F) >= 1",
        spectrum="closed form only for pert = 0: l(l+1)/2; lambda_1 = 1 always",
    ),
}


def list_spaces() -> str:
    lines = []
    for name in sorted(CATALOG):
        info = CATALOG[name]
        lines.append(name)
        for key in ("params", "weight", "bound", "spectrum"):
            label = "ric_f_lower_bound" if key == "bound" else key
            lines.append(f"  {label}: {info[key]}")
    return "\n".join(lines) + "\n"

"""Discrete bases and weak-form assembly of -Delta_f and -Delta_F.

Every operator is stored as a pair (stiffness, gram): the stiffness matrix
represents the Dirichlet form

    real:     (u, v) -> int g(grad u, grad v) dmu
    complex:  (u, v) -> int g(dbar u, dbar v) dmu

and gram the weighted L^2 product.  Entry ``[p, q]`` pairs trial function q
with the conjugated test function p, so ``A c = lam M c`` is the Galerkin
eigenproblem and A is Hermitian by construction.

Tensor-product bases (Hermite on R^n, sphere x Hermite) keep their factors:
the operator is then a Kronecker sum and never has to be formed densely.
The S^1-symmetric CP^1 operator is block diagonal over Fourier modes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import sympy as sp
from scipy import special

from .errors import (GaussBonnetViolated, GramIllConditioned, IncompatibleBasis,
                     InsufficientSmoothness, OperatorTooLarge, ParameterOutOfRange,
                     PoissonSolveFailed)
from .geometry import ComplexFlat, EmbeddedGeometry, fano_symbols
from .reports import IdentityReport
from .spaces import (ModelSpace, QuadratureRule, SpaceKind, hermite_rule, make_space,
                     measure_density, product_rule, sphere_rule, truncation_radius)
from .zonal import LegendreSeries, gauss_legendre, project

GRAM_CONDITION_FLOOR = 1e-10
MATERIALIZE_LIMIT = 6000
PAIR_VECTOR_LIMIT = 2 * 10**6  # larger Kronecker operators are tested factor by factor
POTENTIAL_DEGREE = 96
POTENTIAL_RESIDUAL_TOL = 1e-8


# ================================================================ bases

def hermite_table(lam: float, degree: int, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values and two derivatives of psi_k(x) = He_k(sqrt(lam) x) / sqrt(k!), k <= degree."""
    x = np.asarray(x, dtype=float)
    y = math.sqrt(lam) * x
    psi = np.zeros((x.size, degree + 1))
    psi[:, 0] = 1.0
    if degree >= 1:
        psi[:, 1] = y
    for k in range(1, degree):
        psi[:, k + 1] = (y * psi[:, k] - math.sqrt(k) * psi[:, k - 1]) / math.sqrt(k + 1)
    d1 = np.zeros_like(psi)
    d2 = np.zeros_like(psi)
    k = np.arange(degree + 1)
    d1[:, 1:] = math.sqrt(lam) * np.sqrt(k[1:]) * psi[:, :-1]
    d2[:, 2:] = lam * np.sqrt(k[2:] * (k[2:] - 1)) * psi[:, :-2]
    return psi, d1, d2


@dataclass(frozen=True)
class HermiteTensor:
    max_degree: int
    dim: int
    lam: float

    kind = "hermite"

    @property
    def cardinality(self) -> int:
        return (self.max_degree + 1) ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.max_degree + 1,) * self.dim

    @cached_property
    def multi_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.max_degree + 1), repeat=self.dim)),
                        dtype=int).reshape(-1, self.dim)

    def constant_coefficients(self) -> np.ndarray:
        c = np.zeros(self.cardinality)
        c[0] = 1.0
        return c

    def linear_coefficients(self, axis: int) -> np.ndarray:
        """Coefficients of the coordinate function x_axis (x = He_1(sqrt(lam) x) / sqrt(lam))."""
        c = np.zeros(self.shape)
        idx = [0] * self.dim
        idx[axis] = 1
        c[tuple(idx)] = 1.0 / math.sqrt(self.lam)
        return c.ravel()


def _sphere_monomial_moment(e) -> float:
    """int_{S^m} y^e dsigma on the unit sphere in R^{len(e)}."""
    e = np.asarray(e)
    if np.any(e % 2):
        return 0.0
    b = (e + 1) / 2.0
    return 2.0 * math.exp(sum(special.gammaln(b)) - special.gammaln(b.sum()))


@lru_cache(maxsize=None)
def harmonic_polynomials(m: int, ell: int) -> tuple[tuple[tuple[int, ...], ...], sp.Matrix]:
    """Exact basis of homogeneous harmonic polynomials of degree ell in m+1 variables.

    Returns the degree-ell exponent list and a rational matrix whose columns are
    coefficient vectors spanning the kernel of the Laplacian.
    """
    d = m + 1
    exps = [e for e in itertools.product(range(ell + 1), repeat=d) if sum(e) == ell]
    exps.sort(reverse=True)
    if ell < 2:
        return tuple(exps), sp.eye(len(exps))
    lower = [e for e in itertools.product(range(ell - 1), repeat=d) if sum(e) == ell - 2]
    row = {e: i for i, e in enumerate(lower)}
    lap = sp.zeros(len(lower), len(exps))
    for j, e in enumerate(exps):
        for i in range(d):
            if e[i] >= 2:
                f = list(e)
                f[i] -= 2
                lap[row[tuple(f)], j] += e[i] * (e[i] - 1)
    ker = lap.nullspace()
    return tuple(exps), sp.Matrix.hstack(*ker)


@dataclass(frozen=True)
class SphericalHarmonics:
    """Real harmonic polynomials of degree <= l_max restricted to S^m(r), L^2-orthonormal."""

    l_max: int
    sphere_dim: int
    radius: float

    kind = "harmonics"

    @cached_property
    def _data(self):
        m = self.sphere_dim
        exps_all: list[tuple[int, ...]] = []
        blocks = []
        degrees = []
        for ell in range(self.l_max + 1):
            exps, ker = harmonic_polynomials(m, ell)
            C = np.array(ker.tolist(), dtype=float)
            # orthonormalize on the unit sphere with exact monomial moments
            G = np.array([[_sphere_monomial_moment(np.add(a, b)) for b in exps] for a in exps])
            gram = C.T @ G @ C
            Lc = np.linalg.cholesky(gram)
            C = np.linalg.solve(Lc, C.T).T
            blocks.append((len(exps_all), exps, C))
            exps_all.extend(exps)
            degrees.extend([ell] * C.shape[1])
        K = len(exps_all)
        coeff = np.zeros((K, len(degrees)))
        col = 0
        for off, exps, C in blocks:
            coeff[off:off + len(exps), col:col + C.shape[1]] = C
            col += C.shape[1]
        coeff /= self.radius ** (m / 2.0)  # orthonormal on the radius-r sphere
        return np.array(exps_all, dtype=int), coeff, np.array(degrees)

    @property
    def exponents(self) -> np.ndarray:
        return self._data[0]

    @property
    def coefficients(self) -> np.ndarray:
        return self._data[1]

    @property
    def degrees(self) -> np.ndarray:
        return self._data[2]

    @property
    def cardinality(self) -> int:
        return self.degrees.size

    def constant_coefficients(self) -> np.ndarray:
        c = np.zeros(self.cardinality)
        c[0] = 1.0 / self.coefficients[0, 0]
        return c

    def tables(self, nodes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values (Q, nb), tangential gradients (Q, nb, d) and covariant Hessians (Q, nb, d, d)."""
        x = np.atleast_2d(np.asarray(nodes, dtype=float))
        r = self.radius
        y = x / r
        E = self.exponents
        d = E.shape[1]

        def mono(e):
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.ones((y.shape[0], e.shape[0]))
                for i in range(d):
                    out *= np.where(e[:, i] >= 0, y[:, i:i + 1] ** np.maximum(e[:, i], 0), 0.0)
            return out

        V = mono(E)
        dV = np.stack([E[:, i] * mono(E - np.eye(d, dtype=int)[i]) for i in range(d)], axis=-1)
        d2V = np.empty(V.shape + (d, d))
        for i in range(d):
            for j in range(d):
                shift = E - np.eye(d, dtype=int)[i] - np.eye(d, dtype=int)[j]
                fac = E[:, i] * (E[:, j] - (i == j))
                d2V[..., i, j] = fac * mono(shift)
        C = self.coefficients
        vals = V @ C
        grad_y = np.einsum("qki,kb->qbi", dV, C)
        hess_y = np.einsum("qkij,kb->qbij", d2V, C)
        P = np.eye(d)[None] - y[:, :, None] * y[:, None, :]
        radial = np.einsum("qbi,qi->qb", grad_y, y)
        grad = np.einsum("qij,qbj->qbi", P, grad_y) / r
        hess = (np.einsum("qij,qbjk,qkl->qbil", P, hess_y, P)
                - radial[:, :, None, None] * P[:, None]) / r**2
        return vals, grad, hess


@dataclass(frozen=True)
class ProductBasis:
    sphere: SphericalHarmonics
    flat: HermiteTensor

    kind = "product"

    @property
    def cardinality(self) -> int:
        return self.sphere.cardinality * self.flat.cardinality

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.sphere.cardinality,) + self.flat.shape

    def constant_coefficients(self) -> np.ndarray:
        return np.kron(self.sphere.constant_coefficients(), self.flat.constant_coefficients())

    def linear_coefficients(self, axis: int) -> np.ndarray:
        """Coefficients of the flat coordinate t_axis."""
        return np.kron(self.sphere.constant_coefficients(), self.flat.linear_coefficients(axis))


def jacobi_table(a: int, degree: int, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """p_j = P_j^{(a,a)} scaled so that s^a p_j e^{i m phi} has unit norm on the round sphere."""
    t = np.asarray(t, dtype=float)
    n = np.arange(degree + 1)
    logh = ((2 * a + 1) * math.log(2.0) + 2 * special.gammaln(n + a + 1)
            - np.log(2 * n + 2 * a + 1) - special.gammaln(n + 1) - special.gammaln(n + 2 * a + 1))
    scale = 1.0 / np.sqrt(2 * np.pi * np.exp(logh))
    p = np.stack([special.eval_jacobi(j, a, a, t) for j in n], axis=1)
    p1 = np.zeros_like(p)
    p2 = np.zeros_like(p)
    for j in n[1:]:
        p1[:, j] = 0.5 * (j + 2 * a + 1) * special.eval_jacobi(j - 1, a + 1, a + 1, t)
    for j in n[2:]:
        p2[:, j] = (0.25 * (j + 2 * a + 1) * (j + 2 * a + 2)
                    * special.eval_jacobi(j - 2, a + 2, a + 2, t))
    return p * scale, p1 * scale, p2 * scale


@dataclass(frozen=True)
class FourierLatitudeGrid:
    """Fourier modes |m| <= modes in longitude times s^|m| P_j^{(|m|,|m|)}(t), j <= degree."""

    modes: int
    degree: int
    latitude_points: int

    kind = "fourier"

    @property
    def mode_list(self) -> tuple[int, ...]:
        return tuple(range(-self.modes, self.modes + 1))

    @property
    def block_size(self) -> int:
        return self.degree + 1

    @property
    def cardinality(self) -> int:
        return len(self.mode_list) * self.block_size

    def block_of(self, m: int) -> slice:
        i = self.mode_list.index(m)
        return slice(i * self.block_size, (i + 1) * self.block_size)


@dataclass(frozen=True)
class MonomialFock:
    """Monomials z^a zbar^b on C^n with |a| + |b| <= degree."""

    degree: int
    complex_dim: int

    kind = "fock"

    @cached_property
    def pairs(self) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
        n = self.complex_dim
        out = []
        for total in range(self.degree + 1):
            for e in itertools.product(range(total + 1), repeat=2 * n):
                if sum(e) == total:
                    out.append((tuple(e[:n]), tuple(e[n:])))
        return tuple(out)

    @property
    def cardinality(self) -> int:
        return len(self.pairs)

    def index(self, a, b) -> int:
        return self.pairs.index((tuple(a), tuple(b)))

    def sympy_basis(self, geom: ComplexFlat) -> list:
        return [sp.Mul(*[z**i for z, i in zip(geom.z, a)], *[w**j for w, j in zip(geom.zb, b)])
                for a, b in self.pairs]


@dataclass(frozen=True)
class FDGrid:
    """Second-order conservative finite differences on [-R, R] with Dirichlet ends."""

    h: float
    radius: float
    dim: int

    kind = "fd"

    @property
    def points(self) -> int:
        return int(round(2 * self.radius / self.h)) - 1

    @property
    def cardinality(self) -> int:
        return self.points ** self.dim


_COMPATIBLE = {
    SpaceKind.GAUSSIAN: HermiteTensor,
    SpaceKind.SPHERE: SphericalHarmonics,
    SpaceKind.PRODUCT: ProductBasis,
    SpaceKind.COMPLEX_GAUSSIAN: MonomialFock,
    SpaceKind.FANO_CP1: FourierLatitudeGrid,
}


def make_basis(descriptor: str, space: ModelSpace):
    """Basis from ``hermite:deg=30``, ``harmonics:lmax=6``, ``product:lmax=4,deg=30``,
    ``fourier:modes=3,deg=24,points=96`` or ``fock:deg=3``."""
    from .spaces import _int, parse_descriptor

    kind, params = parse_descriptor(descriptor)
    if kind == "hermite":
        return HermiteTensor(_int(params, "deg"), space.flat_dim or space.real_dimension,
                             space.lam if space.lam else 0.5)
    if kind == "harmonics":
        return SphericalHarmonics(_int(params, "lmax"), space.sphere_dim, space.radius)
    if kind == "product":
        return ProductBasis(SphericalHarmonics(_int(params, "lmax"), space.sphere_dim, space.radius),
                            HermiteTensor(_int(params, "deg"), space.flat_dim, 0.5))
    if kind == "fourier":
        return FourierLatitudeGrid(_int(params, "modes", 3), _int(params, "deg", 24),
                                   _int(params, "points", 96))
    if kind == "fock":
        return MonomialFock(_int(params, "deg"), space.complex_dim)
    raise IncompatibleBasis(f"unknown basis kind {kind!r}")


def default_basis(space: ModelSpace):
    k = space.kind
    if k is SpaceKind.GAUSSIAN:
        return HermiteTensor(30 if space.real_dimension <= 3 else 8, space.real_dimension, space.lam)
    if k is SpaceKind.SPHERE:
        return SphericalHarmonics(6, space.sphere_dim, space.radius)
    if k is SpaceKind.PRODUCT:
        return ProductBasis(SphericalHarmonics(4, space.sphere_dim, space.radius),
                            HermiteTensor(30 if space.flat_dim == 1 else 12, space.flat_dim, 0.5))
    if k is SpaceKind.COMPLEX_GAUSSIAN:
        return MonomialFock(3, space.complex_dim)
    return FourierLatitudeGrid(3, 28, 96)


# ================================================================ operators

def _apply_axis(mat, X, axis):
    return np.moveaxis(np.tensordot(mat, X, axes=([1], [axis])), 0, axis)


@dataclass(frozen=True)
class OperatorBlock:
    label: int
    offset: int
    stiffness: np.ndarray
    gram: np.ndarray

    @property
    def indices(self) -> slice:
        return slice(self.offset, self.offset + self.stiffness.shape[0])


class AssembledOperator:
    """Stiffness + Gram pair of -Delta_f (field 'real') or -Delta_F (field 'complex').

    Exactly one storage form is primary: dense matrices, Kronecker factors
    ``((A_1, M_1), ...)`` with A = sum_i M_1 x .. x A_i x .. x M_n, or
    diagonal blocks.  Dense matrices are materialized on demand.
    """

    def __init__(self, space, basis, field, *, stiffness=None, gram=None, factors=(),
                 blocks=(), form="weak", rule=None):
        self.space = space
        self.basis = basis
        self.field = field
        self.form = form
        self.rule = rule
        self.factors = tuple(factors)
        self.blocks = tuple(blocks)
        self._stiffness = stiffness
        self._gram = gram
        for arr in self._arrays():
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def _arrays(self):
        yield self._stiffness
        yield self._gram
        for A, M in self.factors:
            yield A
            yield M
        for b in self.blocks:
            yield b.stiffness
            yield b.gram

    @property
    def is_separable(self) -> bool:
        return bool(self.factors)

    @property
    def factor_shape(self) -> tuple[int, ...]:
        return tuple(A.shape[0] for A, _ in self.factors)

    @property
    def cardinality(self) -> int:
        if self.factors:
            return int(np.prod(self.factor_shape))
        if self.blocks:
            return sum(b.stiffness.shape[0] for b in self.blocks)
        return self._stiffness.shape[0]

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    def _materialize(self, which: int) -> np.ndarray:
        if self.cardinality > MATERIALIZE_LIMIT:
            raise OperatorTooLarge(f"refusing to densify a {self.cardinality}-dim operator")
        if self.blocks:
            mats = [b.stiffness if which == 0 else b.gram for b in self.blocks]
            return sla.block_diag(*mats)
        dense = [(_dense(A), _dense(M)) for A, M in self.factors]
        if which == 1:
            out = np.ones((1, 1))
            for _, M in dense:
                out = np.kron(out, M)
            return out
        total = 0
        for i in range(len(dense)):
            term = np.ones((1, 1))
            for j, (A, M) in enumerate(dense):
                term = np.kron(term, A if i == j else M)
            total = total + term
        return total

    @cached_property
    def stiffness(self) -> np.ndarray:
        if self._stiffness is not None:
            return self._stiffness
        out = self._materialize(0)
        out.setflags(write=False)
        return out

    @cached_property
    def gram(self) -> np.ndarray:
        if self._gram is not None:
            return self._gram
        out = self._materialize(1)
        out.setflags(write=False)
        return out

    def matvec(self, x) -> np.ndarray:
        return self._mv(x, gram=False)

    def gram_matvec(self, x) -> np.ndarray:
        return self._mv(x, gram=True)

    def _mv(self, x, gram: bool):
        x = np.asarray(x)
        if x.ndim == 2:
            return np.column_stack([self._mv(col, gram) for col in x.T])
        if self.factors:
            X = x.reshape(self.factor_shape)
            if gram:
                for i, (_, M) in enumerate(self.factors):
                    X = _apply_axis(_dense(M), X, i)
                return X.ravel()
            total = np.zeros_like(X, dtype=np.result_type(X, self.dtype))
            for i in range(len(self.factors)):
                Y = X
                for j, (A, M) in enumerate(self.factors):
                    Y = _apply_axis(_dense(A if i == j else M), Y, j)
                total = total + Y
            return total.ravel()
        if self.blocks:
            out = np.zeros(x.shape, dtype=np.result_type(x, self.dtype))
            for b in self.blocks:
                out[b.indices] = (b.gram if gram else b.stiffness) @ x[b.indices]
            return out
        mat = self.gram if gram else self.stiffness
        return mat @ x

    def gram_norm(self, x) -> float:
        return math.sqrt(max(np.vdot(x, self.gram_matvec(x)).real, 0.0))

    def __repr__(self):
        storage = "factors" if self.factors else "blocks" if self.blocks else "dense"
        return (f"AssembledOperator({self.space.describe()}, {type(self.basis).__name__}, "
                f"n={self.cardinality}, {self.field}, {storage})")


def _dense(A):
    return A.toarray() if sps.issparse(A) else A


def _check_gram(grams) -> None:
    """Reject bases whose (product) Gram matrix is numerically singular."""
    ratio = 1.0
    for G in grams:
        ev = np.linalg.eigvalsh(_dense(G))
        if ev[0] <= 0:
            raise GramIllConditioned("Gram matrix is not positive definite")
        ratio *= ev[0] / ev[-1]
    if ratio <= GRAM_CONDITION_FLOOR:
        raise GramIllConditioned(f"Gram min/max eigenvalue ratio {ratio:.2e} below floor")


def _check_gram_blocks(blocks) -> None:
    lo, hi = np.inf, 0.0
    for b in blocks:
        ev = np.linalg.eigvalsh(b.gram)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    if lo <= GRAM_CONDITION_FLOOR * hi:
        raise GramIllConditioned(f"Gram min/max eigenvalue ratio {lo / hi:.2e} below floor")


# ---------------------------------------------------------------- real assembly

def _hermite_factor(lam, degree, rule1d: QuadratureRule):
    x = rule1d.nodes[:, 0]
    w = rule1d.weights * np.exp(-0.5 * lam * x * x)
    psi, d1, _ = hermite_table(lam, degree, x)
    return (d1.T * w) @ d1, (psi.T * w) @ psi


def _hermite_full(space, basis: HermiteTensor, rule: QuadratureRule, form: str):
    lam, n = basis.lam, basis.dim
    idx = basis.multi_indices
    tabs = [hermite_table(lam, basis.max_degree, rule.nodes[:, i]) for i in range(n)]
    vals = np.ones((rule.size, basis.cardinality))
    for i in range(n):
        vals *= tabs[i][0][:, idx[:, i]]
    w = rule.weights * measure_density(space, rule.nodes)
    gram = (vals.T * w) @ vals
    grads = []
    second = []
    for i in range(n):
        g = np.ones_like(vals)
        s2 = np.ones_like(vals)
        for j in range(n):
            g *= tabs[j][1 if i == j else 0][:, idx[:, j]]
            s2 *= tabs[j][2 if i == j else 0][:, idx[:, j]]
        grads.append(g)
        second.append(s2)
    if form == "weak":
        stiff = sum((g.T * w) @ g for g in grads)
    else:
        # strong form: test function times -Delta_f of the trial function, same rule
        lap_f = sum(second[i] - lam * rule.nodes[:, i:i + 1] * grads[i] for i in range(n))
        stiff = (vals.T * w) @ (-lap_f)
    return stiff, gram


def _sphere_matrices(space, basis: SphericalHarmonics, rule: QuadratureRule):
    vals, grads, _ = basis.tables(rule.nodes)
    w = rule.weights * measure_density(space, rule.nodes)
    gram = np.einsum("qa,q,qb->ab", vals, w, vals)
    stiff = np.einsum("qai,q,qbi->ab", grads, w, grads)
    if not space.is_complex:
        return stiff, gram
    # g(dbar u, dbar v) = 1/2 (<grad u, grad v> + i nu . (grad v x grad u)) on a surface
    nu = rule.nodes / space.radius
    cross = np.einsum("qi,qaj,qbk,ijk->qab", nu, grads, grads, _LEVI_CIVITA)
    imag = np.einsum("q,qab->ab", w, cross)
    return 0.5 * (stiff + 1j * imag), gram.astype(complex)


_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in itertools.permutations(range(3)):
    _LEVI_CIVITA[_i, _j, _k] = np.linalg.det(np.eye(3)[[_i, _j, _k]])


# ---------------------------------------------------------------- complex assembly

def _fock_moment(n: int, a, b) -> float:
    """int_{C^n} z^a zbar^b exp(-|z|^2) dV = pi^n a! if a == b else 0."""
    if tuple(a) != tuple(b):
        return 0.0
    return math.pi**n * math.prod(math.factorial(k) for k in a)


def _fock_matrices(basis: MonomialFock):
    n = basis.complex_dim
    pairs = basis.pairs
    N = len(pairs)
    gram = np.zeros((N, N))
    stiff = np.zeros((N, N))
    for p, (ap, bp) in enumerate(pairs):
        for q, (aq, bq) in enumerate(pairs):
            # phi_q conj(phi_p) = z^{aq + bp} zbar^{bq + ap}
            gram[p, q] = _fock_moment(n, np.add(aq, bp), np.add(bq, ap))
            s = 0.0
            for i in range(n):
                if bq[i] and bp[i]:
                    bq_i = list(bq); bq_i[i] -= 1
                    bp_i = list(bp); bp_i[i] -= 1
                    s += bq[i] * bp[i] * _fock_moment(n, np.add(aq, bp_i), np.add(bq_i, ap))
            stiff[p, q] = s
    return stiff.astype(complex), gram.astype(complex)


def fano_mode_tables(space: ModelSpace, m: int, degree: int, t):
    """Per-mode ingredients at latitude nodes t for u = s^|m| p(t) e^{i m phi}.

    Returns dict with
      v    = s^a p
      d1   = u_theta + i u_phi / sin(theta)   (phase e^{i m phi} dropped)
      lap0 = round-sphere Laplacian of u
      e2   = (d/dtheta - (m + cos theta)/sin theta) d1
      v_t  = d v / d t
    """
    a = abs(m)
    t = np.asarray(t, dtype=float)
    s = np.sqrt(1.0 - t * t)
    p, pt, ptt = jacobi_table(a, degree, t)
    T = t[:, None]
    S = s[:, None]
    q = a * T * p - m * p - S**2 * pt
    qt = a * p + a * T * pt - m * pt + 2 * T * pt - S**2 * ptt
    d1 = S ** (a - 1) * q
    lap0 = S**a * (S**2 * ptt - (2 * a + 2) * T * pt - (a + a * a) * p)
    e2 = -(S**a) * qt + S ** (a - 2) * q * ((a - 2) * T - m)
    v = S**a * p
    v_t = S**a * pt - a * T * S ** (a - 2) * p
    return dict(v=v, d1=d1, lap0=lap0, e2=e2, v_t=v_t, s=s)


def _fano_blocks(space: ModelSpace, basis: FourierLatitudeGrid):
    t, tw = gauss_legendre(basis.latitude_points)
    F = space.potential(t)
    w = space.conformal(t)
    blocks = []
    for i, m in enumerate(basis.mode_list):
        tab = fano_mode_tables(space, m, basis.degree, t)
        d1, v = tab["d1"], tab["v"]
        # A = 2 pi * 1/2 int d1_j d1_k e^F dt ;  M = 2 pi int v_j v_k e^{F + 2w} dt
        A = np.pi * (d1.T * (tw * np.exp(F))) @ d1
        M = 2 * np.pi * (v.T * (tw * np.exp(F + 2 * w))) @ v
        blocks.append(OperatorBlock(m, i * basis.block_size, A.astype(complex), M.astype(complex)))
    return tuple(blocks)


# ---------------------------------------------------------------- entry point

def assemble(space: ModelSpace, basis, rule: QuadratureRule | None = None, *,
             form: str = "weak", separable: bool | None = None) -> AssembledOperator:
    """Assemble -Delta_f (real) or -Delta_F (complex) in `basis` with quadrature `rule`.

    ``form="strong"`` is a diagnostic that pairs test functions with the
    pointwise operator on the given rule; it is *not* symmetric unless the
    rule integrates the products exactly.
    """
    expected = FDGrid if isinstance(basis, FDGrid) else _COMPATIBLE[space.kind]
    if not isinstance(basis, expected) or (isinstance(basis, FDGrid)
                                           and space.kind is not SpaceKind.GAUSSIAN):
        raise IncompatibleBasis(f"{type(basis).__name__} cannot discretize {space.describe()}")
    if isinstance(basis, FDGrid):
        return finite_difference_operator(space, basis.h, basis.radius)
    k = space.kind
    if form not in ("weak", "strong"):
        raise ValueError(form)
    if form == "strong" and k is not SpaceKind.GAUSSIAN:
        raise IncompatibleBasis("strong-form diagnostic is only offered on Gaussian spaces")

    if k is SpaceKind.GAUSSIAN:
        if basis.dim != space.real_dimension or basis.lam != space.lam:
            raise IncompatibleBasis("Hermite basis dimension/lambda mismatch")
        rule = rule or hermite_rule(space, basis.max_degree + 8)
        use_factors = (separable is not False and form == "weak" and len(rule.factors) == basis.dim)
        if use_factors:
            factors = [_hermite_factor(basis.lam, basis.max_degree, r) for r in rule.factors]
            _check_gram([M for _, M in factors])
            return AssembledOperator(space, basis, "real", factors=factors, rule=rule)
        stiff, gram = _hermite_full(space, basis, rule, form)
        _check_gram([gram])
        return AssembledOperator(space, basis, "real", stiffness=stiff, gram=gram, form=form,
                                 rule=rule)

    if k is SpaceKind.SPHERE:
        rule = rule or sphere_rule(space, 2 * basis.l_max + 2)
        stiff, gram = _sphere_matrices(space, basis, rule)
        _check_gram([gram])
        return AssembledOperator(space, basis, "complex" if space.is_complex else "real",
                                 stiffness=stiff, gram=gram, rule=rule)

    if k is SpaceKind.PRODUCT:
        rule = rule or product_rule(space, 2 * basis.sphere.l_max + 2, basis.flat.max_degree + 8)
        if len(rule.factors) != 2:
            raise IncompatibleBasis("product assembly needs a (sphere x flat) tensor rule")
        srule, frule = rule.factors
        sph = ModelSpace(SpaceKind.SPHERE, space.sphere_dim, space.weight_sign_convention, None,
                         radius=space.radius, sphere_dim=space.sphere_dim)
        factors = [_sphere_matrices(sph, basis.sphere, srule)]
        factors += [_hermite_factor(0.5, basis.flat.max_degree, r) for r in frule.factors]
        _check_gram([M for _, M in factors])
        return AssembledOperator(space, basis, "real", factors=factors, rule=rule)

    if k is SpaceKind.COMPLEX_GAUSSIAN:
        stiff, gram = _fock_matrices(basis)
        _check_gram([gram])
        return AssembledOperator(space, basis, "complex", stiffness=stiff, gram=gram)

    blocks = _fano_blocks(space, basis)
    _check_gram_blocks(blocks)
    return AssembledOperator(space, basis, "complex", blocks=blocks)


def finite_difference_operator(space: ModelSpace, h: float,
                               radius: float | None = None) -> AssembledOperator:
    """Conservative 3-point scheme for -Delta_f on the truncated cube, Dirichlet boundary.

    Energy  sum_i ((u_{i+1} - u_i)/h)^2 exp(-f(x_{i+1/2})) h,  mass  sum_i u_i^2 exp(-f(x_i)) h.
    The n-dimensional operator is the Kronecker sum of the 1-D one.
    """
    if space.kind is not SpaceKind.GAUSSIAN:
        raise IncompatibleBasis("finite differences are offered on Gaussian spaces")
    lam = space.lam
    R = truncation_radius(lam) if radius is None else radius
    grid = FDGrid(h, R, space.real_dimension)
    N = grid.points + 1
    hh = 2 * R / N
    x = -R + hh * np.arange(1, N)
    mid = -R + hh * (np.arange(N) + 0.5)
    c = np.exp(-0.5 * lam * mid**2) / hh
    main = c[:-1] + c[1:]
    A = sps.diags([main, -c[1:-1], -c[1:-1]], [0, -1, 1], format="csr")
    M = sps.diags(hh * np.exp(-0.5 * lam * x**2), 0, format="csr")
    return AssembledOperator(space, grid, "real", factors=[(A, M)] * space.real_dimension)


# ================================================================ apply

def coordinates(space: ModelSpace):
    """Sympy symbols a symbolic test function may use on `space`."""
    if space.kind is SpaceKind.COMPLEX_GAUSSIAN:
        g = ComplexFlat(space.complex_dim)
        return g.z + g.zb
    if space.kind is SpaceKind.FANO_CP1:
        return fano_symbols()
    return _real_geometry(space).coords


def _real_geometry(space: ModelSpace) -> EmbeddedGeometry:
    if space.is_complex and space.kind is SpaceKind.SPHERE:
        space = make_space(f"sphere:n=2,r={space.radius!r}")
    return EmbeddedGeometry(space)


def apply(space: ModelSpace, u, nodes) -> np.ndarray:
    """Delta_f u (real convention) or Delta_F u (complex convention) at `nodes`.

    `u` is a sympy expression in :func:`coordinates`; derivatives are exact.
    Sampled inputs go through :func:`apply_sampled`.
    """
    u = sp.sympify(u)
    k = space.kind
    if k is SpaceKind.COMPLEX_GAUSSIAN:
        geom = ComplexFlat(space.complex_dim)
        return geom.lambdify(geom.delta_F(u))(nodes)
    if k is SpaceKind.FANO_CP1:
        return _apply_fano(space, u, nodes)
    geom = _real_geometry(space)
    if space.is_complex:
        # F = 0 on the round sphere: Delta_F = (1/2) Delta_d
        expr = geom.lap(u) / 2
        return geom.lambdify(expr)(nodes).astype(complex)
    return geom.lambdify(geom.weighted_lap(u))(nodes)


def _apply_fano(space: ModelSpace, u, nodes) -> np.ndarray:
    th, ph = fano_symbols()
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    theta, phi = nodes[:, 0], nodes[:, 1]

    def ev(expr):
        fn = sp.lambdify((th, ph), expr, modules="numpy")
        return np.broadcast_to(np.asarray(fn(theta, phi), dtype=complex), theta.shape)

    u_t, u_p = sp.diff(u, th), sp.diff(u, ph)
    s, t = np.sin(theta), np.cos(theta)
    lap0 = ev(sp.diff(u, th, 2)) + t / s * ev(u_t) + ev(sp.diff(u, ph, 2)) / s**2
    F_theta = -s * space.potential.dt(t)
    first = ev(u_t) + 1j * ev(u_p) / s
    return np.exp(-2 * space.conformal(t)) * 0.5 * (lap0 + F_theta * first)


def _d1(u, h, axis):
    f = lambda k: np.take(u, np.arange(2 + k, u.shape[axis] - 2 + k), axis=axis)  # noqa: E731
    return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h)


def _d2(u, h, axis):
    f = lambda k: np.take(u, np.arange(2 + k, u.shape[axis] - 2 + k), axis=axis)  # noqa: E731
    return (-f(2) + 16 * f(1) - 30 * f(0) + 16 * f(-1) - f(-2)) / (12 * h * h)


def _trim(u, axis):
    return np.take(u, np.arange(2, u.shape[axis] - 2), axis=axis)


def apply_sampled(space: ModelSpace, axes, values, smoothness_tol: float = 1e-2):
    """Fourth-order central-difference Delta_f / Delta_F on a uniform 'ij' grid.

    Gaussian spaces take a real grid over R^n; complex Gaussian spaces a grid
    over (x_1, y_1, ..., x_n, y_n).  Returns the interior axes (two points
    trimmed at each end) and the operator values there.  The result is
    rejected when a coarser (2h) evaluation disagrees by more than
    `smoothness_tol` relative to the signal.
    """
    if space.kind not in (SpaceKind.GAUSSIAN, SpaceKind.COMPLEX_GAUSSIAN):
        raise InsufficientSmoothness("sampled input is only supported on flat catalog spaces")
    axes = [np.asarray(a, dtype=float) for a in axes]
    values = np.asarray(values)
    for a in axes:
        if a.size < 9:
            raise InsufficientSmoothness("need at least 9 samples per axis for the 4th-order check")
        steps = np.diff(a)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise InsufficientSmoothness("grid must be uniform")
    fine = _fd_operator(space, axes, values)
    coarse_axes = [a[::2] for a in axes]
    coarse = _fd_operator(space, coarse_axes, values[tuple(slice(None, None, 2) for _ in axes)])
    # compare on the points shared by both grids
    inner = [a[2:-2] for a in axes]
    shared = tuple(np.isin(ia, ca[2:-2]) for ia, ca in zip(inner, coarse_axes))
    sel = fine[np.ix_(*shared)]
    cidx = tuple(np.isin(ca[2:-2], ia[sh]) for ca, ia, sh in zip(coarse_axes, inner, shared))
    csel = coarse[np.ix_(*cidx)]
    scale = max(float(np.max(np.abs(sel))), 1e-300)
    if sel.size and np.max(np.abs(sel - csel)) > smoothness_tol * scale:
        raise InsufficientSmoothness("finite differences are not resolved on this grid")
    return inner, fine


def _fd_operator(space, axes, u):
    hs = [a[1] - a[0] for a in axes]
    mesh = np.meshgrid(*[a[2:-2] for a in axes], indexing="ij")
    core = u
    for ax in range(len(axes)):
        core = _trim(core, ax)
    if space.kind is SpaceKind.GAUSSIAN:
        out = np.zeros_like(core, dtype=float)
        for i in range(len(axes)):
            di = _d1(u, hs[i], i)
            d2 = _d2(u, hs[i], i)
            for j in range(len(axes)):
                if j != i:
                    di, d2 = _trim(di, j), _trim(d2, j)
            out = out + d2 - space.lam * mesh[i] * di
        return out
    out = np.zeros_like(core, dtype=complex)
    for i in range(space.complex_dim):
        parts = {}
        for ax in (2 * i, 2 * i + 1):
            d1, d2 = _d1(u, hs[ax], ax), _d2(u, hs[ax], ax)
            for j in range(len(axes)):
                if j != ax:
                    d1, d2 = _trim(d1, j), _trim(d2, j)
            parts[ax] = (d1, d2)
        zbar = mesh[2 * i] - 1j * mesh[2 * i + 1]
        u_zbar = 0.5 * (parts[2 * i][0] + 1j * parts[2 * i + 1][0])
        out = out + 0.25 * (parts[2 * i][1] + parts[2 * i + 1][1]) - zbar * u_zbar
    return out


# ================================================================ Ricci potential on CP^1

@dataclass(frozen=True)
class PotentialResult:
    potential: LegendreSeries
    residual: float  # max |1/2 Delta_d F - (K - 1)| on the check grid, poles included
    area: float


def gaussian_curvature(space: ModelSpace, t) -> np.ndarray:
    """K of exp(2w) g_round: K = exp(-2w) (1 - Delta_round w)."""
    w = space.conformal
    return np.exp(-2 * w(t)) * (1 - w.round_laplacian()(t))


def ricci_potential_cp1(space: ModelSpace) -> PotentialResult:
    """Solve 1/2 Delta_d F = K - 1 on the S^1-symmetric sphere, normalized F(north pole) = 0.

    With g = exp(2w) g_round the equation reads Delta_round F = 2 - 2 exp(2w) - 2 Delta_round w,
    so F = -2w + G with Delta_round G = 2 (1 - exp(2w)), solved mode by mode in Legendre series.
    """
    if space.kind is not SpaceKind.FANO_CP1 or space.conformal is None:
        raise ParameterOutOfRange("ricci_potential_cp1 needs a fano-cp1 space")
    w = space.conformal
    t, tw = gauss_legendre(256)
    area = 2 * np.pi * math.fsum((tw * np.exp(2 * w(t))).tolist())
    if abs(area - 4 * np.pi) > 1e-9 * 4 * np.pi:
        raise GaussBonnetViolated(
            f"area {area:.12g} != 4 pi: int (K - 1) dA = {4 * np.pi - area:.3e}")
    if len(w.coeffs) <= 1:
        return PotentialResult(LegendreSeries((0.0,)), 0.0, area)
    rhs = project(lambda x: 2.0 * (1.0 - np.exp(2 * w(x))), POTENTIAL_DEGREE, nodes=256)
    ell = np.arange(POTENTIAL_DEGREE + 1)
    g = np.zeros(POTENTIAL_DEGREE + 1)
    g[1:] = -rhs.array[1:] / (ell[1:] * (ell[1:] + 1))
    g[: len(w.coeffs)] -= 2 * w.array
    F = LegendreSeries.from_array(g)
    F = F.shifted(-float(F(1.0)))
    tc = np.cos(np.linspace(0.0, np.pi, 257))
    lhs = 0.5 * np.exp(-2 * w(tc)) * F.round_laplacian()(tc)
    residual = float(np.max(np.abs(lhs - (gaussian_curvature(space, tc) - 1.0))))
    if not residual <= POTENTIAL_RESIDUAL_TOL:
        raise PoissonSolveFailed(f"Ricci potential residual {residual:.3e}")
    return PotentialResult(F, residual, area)


# ================================================================ self-adjointness

def operator_norm(op: AssembledOperator, iterations: int = 60, seed: int = 0) -> float:
    """Power-iteration estimate of ||A||_2 (A Hermitian)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.cardinality)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = op.matvec(x)
        est = float(np.linalg.norm(y))
        if est == 0.0:
            return 0.0
        x = y / est
    return est


def _hermitian_defect(A) -> float:
    A = _dense(A)
    return float(np.linalg.norm(A - A.conj().T))


def selfadjointness_report(op: AssembledOperator, pairs: int = 100, seed: int = 0,
                           rel_tol: float = 1e-12) -> IdentityReport:
    """max |<Au, v> - <u, Av>| / (|u| |v|) in the Gram inner product over random pairs."""
    if op.factors and op.cardinality > PAIR_VECTOR_LIMIT:
        return _factorwise_selfadjointness(op, pairs, seed, rel_tol)
    rng = np.random.default_rng(seed)
    n = op.cardinality
    complex_field = op.field == "complex"
    worst = 0.0
    defects = []
    for _ in range(pairs):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        if complex_field:
            u = u + 1j * rng.standard_normal(n)
            v = v + 1j * rng.standard_normal(n)
        lhs = np.vdot(v, op.matvec(u))
        rhs = np.vdot(op.matvec(v), u)
        d = abs(lhs - rhs) / (op.gram_norm(u) * op.gram_norm(v))
        defects.append(d)
        worst = max(worst, d)
    if op.factors:
        matrix_defect = max(_hermitian_defect(A) for A, _ in op.factors)
    elif op.blocks:
        matrix_defect = max(_hermitian_defect(b.stiffness) for b in op.blocks)
    else:
        matrix_defect = _hermitian_defect(op.stiffness)
    norm = operator_norm(op)
    return IdentityReport(
        "selfadjointness", float(worst), float(np.sqrt(np.mean(np.square(defects)))),
        rel_tol * norm, f"{pairs} random {'complex' if complex_field else 'real'} pairs, seed {seed}",
        {"matrix_defect": matrix_defect, "operator_norm": norm, "form": op.form,
         "expected_nonzero": op.form == "strong"})


def _factorwise_selfadjointness(op: AssembledOperator, pairs: int, seed: int,
                                rel_tol: float) -> IdentityReport:
    """Random-pair test on each Kronecker factor of a very large separable operator.

    A Kronecker sum is self-adjoint in the product Gram inner product as soon
    as every factor is, so each factor's relative defect is what matters.  The
    reported defect is the worst relative factor defect scaled by the bound
    ||A|| <= sum_i ||A_i|| prod_{j != i} ||M_j||.
    """
    reports = [selfadjointness_report(AssembledOperator(op.space, op.basis, op.field,
                                                        factors=[(A, M)], form=op.form),
                                      pairs, seed + i, rel_tol)
               for i, (A, M) in enumerate(op.factors)]
    gram_norms = [float(sla.norm(_dense(M), 2)) for _, M in op.factors]
    norm = sum(r.extras["operator_norm"] * math.prod(g for j, g in enumerate(gram_norms) if j != i)
               for i, r in enumerate(reports))
    ratio = max(r.max_residual / max(r.extras["operator_norm"], 1e-300) for r in reports)
    l2 = max(r.l2_residual / max(r.extras["operator_norm"], 1e-300) for r in reports)
    return IdentityReport(
        "selfadjointness", ratio * norm, l2 * norm, rel_tol * norm,
        f"{pairs} random pairs on each of {len(reports)} Kronecker factors, seed {seed}",
        {"matrix_defect": max(r.extras["matrix_defect"] for r in reports),
         "operator_norm": norm, "form": op.form, "expected_nonzero": op.form == "strong"})

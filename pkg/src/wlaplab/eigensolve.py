"""Generalized Hermitian eigensolves, multiplicity clustering and bound checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import (AllZero, ConvergenceFailure, GramNotPD, NotFirstCluster, OperatorTooLarge,
                     ParameterOutOfRange)
from .operators import (AssembledOperator, HermiteTensor, ProductBasis, SphericalHarmonics,
                        _dense, hermite_table)
from .spaces import ModelSpace, SpaceKind, measure_density

DENSE_LIMIT = 2000
DEFAULT_CLUSTER_TOL = 1e-6
DEFAULT_ZERO_TOL = 1e-8  # relative to the spectral radius
DEFAULT_BOUND_SLACK = 1e-6
SEPARABLE_VECTOR_LIMIT = 2 * 10**7  # entries; larger Kronecker eigenvectors stay factored


@dataclass(frozen=True)
class Cluster:
    value: float
    multiplicity: int
    members: tuple[int, ...]
    truncated: bool = False  # touches the end of the computed range: multiplicity is a lower bound


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    clusters: tuple[Cluster, ...]
    eigenvectors: np.ndarray | None  # columns, Gram-orthonormal; None when kept factored
    residuals: np.ndarray  # ||A v - lam M v|| / ||v||_M
    cluster_tol: float
    spectral_radius: float
    method: str
    labels: tuple = ()  # Fourier mode per pair on block operators
    operator: AssembledOperator | None = field(default=None, repr=False, compare=False)

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    def default_zero_tol(self) -> float:
        return DEFAULT_ZERO_TOL * max(self.spectral_radius, 1.0)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "count": self.count,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "clusters": [{"value": c.value, "multiplicity": c.multiplicity,
                          "truncated": c.truncated} for c in self.clusters],
            "max_residual": float(self.residuals.max()) if self.count else 0.0,
            "spectral_radius": self.spectral_radius,
        }


def cluster_eigenvalues(values, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                        complete: bool = True) -> tuple[Cluster, ...]:
    """Group ascending values: neighbours within cluster_tol * max(1, lam) share a cluster."""
    values = np.asarray(values, dtype=float)
    groups: list[list[int]] = []
    for i, lam in enumerate(values):
        if groups and lam - values[i - 1] <= cluster_tol * max(1.0, abs(values[i - 1])):
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for g in groups:
        truncated = (not complete) and g[-1] == values.size - 1
        out.append(Cluster(float(np.mean(values[g])), len(g), tuple(g), truncated))
    return tuple(out)


def _check_gram_pd(op: AssembledOperator) -> None:
    mats = ([M for _, M in op.factors] if op.factors
            else [b.gram for b in op.blocks] if op.blocks else [op.gram])
    for M in mats:
        try:
            np.linalg.cholesky(_dense(M))
        except np.linalg.LinAlgError as exc:
            raise GramNotPD("Gram matrix is not positive definite") from exc


def spectrum(op: AssembledOperator, count: int, tol: float = 1e-8, *, method: str = "auto",
             cluster_tol: float = DEFAULT_CLUSTER_TOL, seed: int = 0) -> SpectrumResult:
    """The `count` smallest eigenpairs of A v = lam M v.

    method: ``auto`` picks ``separable`` for Kronecker-sum operators, ``blocks``
    for block-diagonal ones, ``dense`` up to DENSE_LIMIT and ``iterative``
    (shift-invert Lanczos with a seeded start vector) above.
    """
    n = op.cardinality
    if count < 0 or count > n:
        raise ParameterOutOfRange(f"count must lie in [0, {n}]")
    _check_gram_pd(op)
    if method == "auto":
        method = ("separable" if op.factors else "blocks" if op.blocks
                  else "dense" if n <= DENSE_LIMIT else "iterative")
    if count == 0:
        empty = np.zeros(0)
        return SpectrumResult(empty, (), np.zeros((n, 0), dtype=op.dtype), empty, cluster_tol,
                              0.0, method, (), op)
    labels: tuple = ()
    if method == "dense":
        vals, vecs = sla.eigh(op.stiffness, op.gram)
        radius = float(np.max(np.abs(vals)))
        vals, vecs = vals[:count], vecs[:, :count]
    elif method == "separable":
        vals, vecs, radius, residuals = _separable(op, count)
    elif method == "blocks":
        vals, vecs, radius, labels = _blocks(op, count)
    elif method == "iterative":
        vals, vecs, radius = _iterative(op, count, tol, seed)
    else:
        raise ParameterOutOfRange(f"unknown method {method!r}")

    if method != "separable":
        vecs = _fix_phase(vecs)
        AV = op.matvec(vecs)
        MV = op.gram_matvec(vecs)
        norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", vecs.conj(), MV).real, 0.0))
        residuals = np.linalg.norm(AV - MV * vals[None, :], axis=0) / norms
    bad = residuals > tol * np.maximum(1.0, np.abs(vals))
    if np.any(bad):
        raise ConvergenceFailure(f"eigen-residual {residuals.max():.2e} exceeds tol {tol:.1e}")
    clusters = cluster_eigenvalues(vals, cluster_tol, complete=count == n)
    vals.setflags(write=False)
    if vecs is not None:
        vecs.setflags(write=False)
    residuals.setflags(write=False)
    return SpectrumResult(vals, clusters, vecs, residuals, cluster_tol, radius, method, labels, op)


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Deterministic sign/phase: the largest-magnitude entry of each vector is real positive."""
    vecs = np.array(vecs)
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j]) > 0.5 * np.abs(vecs[:, j]).max()))
        ph = vecs[k, j] / abs(vecs[k, j])
        vecs[:, j] /= ph
    return vecs


def _separable(op: AssembledOperator, count: int):
    """Eigenpairs of a Kronecker sum from per-factor generalized eigenproblems.

    Residuals are evaluated exactly from factor inner products, so the full
    eigenvectors are only materialized when they fit SEPARABLE_VECTOR_LIMIT.
    """
    parts = []
    radius = 0.0
    for A, M in op.factors:
        A, M = _dense(A), _dense(M)
        v, V = sla.eigh(A, M)
        radius += float(np.max(np.abs(v)))
        k = min(count, v.size)
        V = _fix_phase(V[:, :k])
        MV = M @ V
        R = A @ V - MV * v[None, :k]
        parts.append((v[:k], V, MV, R))
    combos = np.array(list(itertools.product(*[range(p[0].size) for p in parts])))
    sums = np.zeros(len(combos))
    for axis, part in enumerate(parts):
        sums += part[0][combos[:, axis]]
    order = np.argsort(sums, kind="stable")[:count]
    vals = sums[order]
    residuals = np.array([_kron_sum_residual(parts, idx) for idx in combos[order]])
    if op.cardinality * count > SEPARABLE_VECTOR_LIMIT:
        return vals, None, radius, residuals
    vecs = []
    for idx in combos[order]:
        vec = np.ones(1)
        for axis, part in enumerate(parts):
            vec = np.kron(vec, part[1][:, idx[axis]])
        vecs.append(vec)
    return vals, np.column_stack(vecs).astype(op.dtype), radius, residuals


def _kron_sum_residual(parts, idx) -> float:
    """||sum_i (M v_1 x .. r_i .. x M v_d)||, with unit Gram norms, via factor inner products."""
    d = len(parts)
    cols = [(p[2][:, k], p[3][:, k]) for p, k in zip(parts, idx)]
    total = 0.0
    for i in range(d):
        for k in range(d):
            prod = 1.0
            for j in range(d):
                a = cols[j][1] if j == i else cols[j][0]
                b = cols[j][1] if j == k else cols[j][0]
                prod *= float(np.dot(a.conj(), b).real)
            total += prod
    return math.sqrt(max(total, 0.0))


def _blocks(op: AssembledOperator, count: int):
    vals, vecs, labels = [], [], []
    radius = 0.0
    n = op.cardinality
    for b in op.blocks:
        v, V = sla.eigh(b.stiffness, b.gram)
        radius = max(radius, float(np.max(np.abs(v))))
        for j in range(v.size):
            full = np.zeros(n, dtype=op.dtype)
            full[b.indices] = V[:, j]
            vals.append(v[j])
            vecs.append(full)
            labels.append(b.label)
    order = np.argsort(np.asarray(vals), kind="stable")[:count]
    return (np.asarray(vals)[order], np.column_stack([vecs[i] for i in order]), radius,
            tuple(labels[i] for i in order))


def _iterative(op: AssembledOperator, count: int, tol: float, seed: int):
    try:
        A, M = op.stiffness, op.gram
    except OperatorTooLarge:
        raise
    n = op.cardinality
    if count >= n - 1:
        vals, vecs = sla.eigh(A, M)
        return vals[:count], vecs[:, :count], float(np.max(np.abs(vals)))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n).astype(op.dtype)
    # a negative shift keeps A - sigma M positive definite
    sigma = -0.1 * max(1.0, float(np.abs(np.diag(A)).max() / np.abs(np.diag(M)).max()))
    try:
        vals, vecs = eigsh(A, k=count, M=M, sigma=sigma, which="LM", v0=v0, tol=tol * 1e-3,
                           maxiter=50 * n)
        top = eigsh(A, k=1, M=M, which="LA", v0=v0, tol=1e-4, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order].real, vecs[:, order]
    # re-orthonormalize in the Gram product (ARPACK is only approximately M-orthogonal)
    G = vecs.conj().T @ (M @ vecs)
    L = np.linalg.cholesky(0.5 * (G + G.conj().T))
    vecs = np.linalg.solve(L.conj(), vecs.T).T
    return vals, vecs, float(abs(top[0]))


# ================================================================ lambda_1 and bounds

def first_nonzero(result: SpectrumResult, zero_tol: float | None = None) -> tuple[float, int]:
    c = first_nonzero_cluster(result, zero_tol)
    return c.value, c.multiplicity


def first_nonzero_cluster(result: SpectrumResult, zero_tol: float | None = None) -> Cluster:
    zero_tol = result.default_zero_tol() if zero_tol is None else zero_tol
    for c in result.clusters:
        if c.value > zero_tol:
            return c
    raise AllZero(f"no eigenvalue above {zero_tol:.2e} among {result.count}; raise the count")


def declared_bound(space: ModelSpace) -> float | None:
    """Ric_f lower bound (real convention) or the Fano-type bound of Delta_F (complex)."""
    return space.ric_f_lower_bound


@dataclass(frozen=True)
class BoundReport:
    space: str
    lambda1: float
    multiplicity: int
    bound: float
    slack: float
    status: str  # PASS, FAIL or SKIPPED
    equality: bool

    @property
    def verdict(self) -> str:
        return self.status

    def to_dict(self) -> dict:
        return {"check": "lower_bound", "space": self.space, "lambda1": self.lambda1,
                "multiplicity": self.multiplicity, "bound": self.bound, "slack": self.slack,
                "equality": self.equality, "verdict": self.status,
                "inequality": f"{self.lambda1!r} >= {self.bound!r} - {self.slack!r}"}


def check_lower_bound(result: SpectrumResult, space: ModelSpace, *, bound: float | None = None,
                      slack: float = DEFAULT_BOUND_SLACK,
                      zero_tol: float | None = None) -> BoundReport:
    """PASS iff lambda_1 >= bound - slack.  `bound` overrides the catalog value (falsification probes)."""
    b = declared_bound(space) if bound is None else bound
    lam, mult = first_nonzero(result, zero_tol)
    if b is None:
        return BoundReport(space.describe(), lam, mult, float("nan"), slack, "SKIPPED", False)
    status = "PASS" if lam >= b - slack else "FAIL"
    return BoundReport(space.describe(), lam, mult, float(b), slack, status,
                       abs(lam - b) <= slack)


# ================================================================ cluster diagnostics

def _vectors(result: SpectrumResult) -> np.ndarray:
    if result.eigenvectors is None:
        raise OperatorTooLarge("eigenvectors of this Kronecker operator were not materialized")
    return result.eigenvectors


def cluster_correlations(result: SpectrumResult, cluster: Cluster, references) -> np.ndarray:
    """|P r|_M / |r|_M for each reference coefficient vector r, P the projector on the cluster span."""
    op = result.operator
    V = _vectors(result)[:, list(cluster.members)]
    out = []
    for r in references:
        r = np.asarray(r, dtype=op.dtype)
        proj = V.conj().T @ op.gram_matvec(r)
        out.append(float(np.linalg.norm(proj) / op.gram_norm(r)))
    return np.array(out)


def align_cluster(result: SpectrumResult, cluster: Cluster, references) -> np.ndarray:
    """Rotate a degenerate eigenspace so its basis follows the reference functions.

    The references are projected onto the cluster span and Gram-orthonormalized
    in order; the returned columns span the same space as the cluster.
    """
    op = result.operator
    V = _vectors(result)[:, list(cluster.members)]
    coeffs = np.column_stack([V.conj().T @ op.gram_matvec(np.asarray(r, dtype=op.dtype))
                              for r in references])
    Q, R = np.linalg.qr(coeffs)
    signs = np.sign(np.diag(R).real)
    signs[signs == 0] = 1.0
    return (V @ Q) * signs[None, :]


# ================================================================ splitting certificate

@dataclass(frozen=True)
class FieldSamples:
    values: np.ndarray  # (Q,)
    grad: np.ndarray  # (Q, D) ambient components
    hess: np.ndarray  # (Q, D, D)
    weights: np.ndarray  # quadrature weight times measure density
    flat_axes: tuple[int, ...]  # columns of the flat (Euclidean) coordinates
    coordinates: np.ndarray  # (Q, D) node coordinates


def _axis_tables(space, basis, rule):
    """Per tensor axis: (width D_a, value matrix, grad list, hess dict) acting on coefficients."""
    axes = []
    if isinstance(basis, ProductBasis):
        srule, frule = rule.factors
        axes.append(("sphere", basis.sphere, srule))
        axes += [("hermite", basis.flat, r) for r in frule.factors]
    elif isinstance(basis, SphericalHarmonics):
        axes.append(("sphere", basis, rule))
    elif isinstance(basis, HermiteTensor):
        if len(rule.factors) != basis.dim:
            raise ParameterOutOfRange("evaluation needs a tensor-product rule")
        axes += [("hermite", basis, r) for r in rule.factors]
    else:
        raise ParameterOutOfRange(f"no real-space evaluation for {type(basis).__name__}")
    out = []
    for kind, b, r in axes:
        if kind == "sphere":
            V, G, H = b.tables(r.nodes)
            d = G.shape[-1]
            out.append(dict(width=d, val=V, grad=[G[:, :, i] for i in range(d)],
                            hess={(i, j): H[:, :, i, j] for i in range(d) for j in range(d)},
                            nodes=r.nodes))
        else:
            T0, T1, T2 = hermite_table(b.lam, b.max_degree, r.nodes[:, 0])
            out.append(dict(width=1, val=T0, grad=[T1], hess={(0, 0): T2}, nodes=r.nodes))
    return out


def _contract(C, mats):
    X = C
    for axis, mat in enumerate(mats):
        X = np.moveaxis(np.tensordot(mat, X, axes=([1], [axis])), 0, axis)
    return X.ravel()


def evaluate_real(op: AssembledOperator, coeffs, rule=None) -> FieldSamples:
    """Values, gradient and Hessian of the function with `coeffs` at the rule's nodes."""
    space, basis = op.space, op.basis
    rule = rule or op.rule
    if rule is None:
        raise ParameterOutOfRange("no quadrature rule attached to the operator")
    tabs = _axis_tables(space, basis, rule)
    shape = tuple(t["val"].shape[1] for t in tabs)
    C = np.asarray(coeffs).reshape(shape)
    coord_axis = [(a, i) for a, t in enumerate(tabs) for i in range(t["width"])]
    D = len(coord_axis)
    base = [t["val"] for t in tabs]
    values = _contract(C, base)
    Q = values.size
    grad = np.zeros((Q, D), dtype=values.dtype)
    hess = np.zeros((Q, D, D), dtype=values.dtype)
    for c, (a, i) in enumerate(coord_axis):
        mats = list(base)
        mats[a] = tabs[a]["grad"][i]
        grad[:, c] = _contract(C, mats)
    for c1, (a1, i1) in enumerate(coord_axis):
        for c2, (a2, i2) in enumerate(coord_axis):
            if c2 < c1:
                hess[:, c1, c2] = hess[:, c2, c1]
                continue
            mats = list(base)
            if a1 == a2:
                mats[a1] = tabs[a1]["hess"][(i1, i2)]
            else:
                mats[a1] = tabs[a1]["grad"][i1]
                mats[a2] = tabs[a2]["grad"][i2]
            hess[:, c1, c2] = _contract(C, mats)
    w = rule.weights * measure_density(space, rule.nodes)
    sphere_width = tabs[0]["width"] if space.sphere_dim else 0
    flat = tuple(range(sphere_width, D))
    return FieldSamples(values, grad, hess, w, flat, np.asarray(rule.nodes, dtype=float))


@dataclass(frozen=True)
class SplittingReport:
    hessian_norm: float  # ||Hess u||_{L^2(dmu)} / ||u||_{L^2(dmu)}
    correlations: tuple[float, ...]  # |corr(u, t_a)| per flat coordinate
    eigenvalue: float
    tolerance: float

    @property
    def verdict(self) -> str:
        return "PASS" if self.hessian_norm <= self.tolerance else "FAIL"

    @property
    def best_correlation(self) -> float:
        return max(self.correlations) if self.correlations else 0.0

    def to_dict(self) -> dict:
        return {"check": "splitting", "hessian_norm": self.hessian_norm,
                "correlations": list(self.correlations), "eigenvalue": self.eigenvalue,
                "tolerance": self.tolerance, "verdict": self.verdict}


def splitting_certificate(space: ModelSpace, result: SpectrumResult, vector, *,
                          tolerance: float = 1e-8, zero_tol: float | None = None,
                          member_tol: float = 1e-6, rule=None) -> SplittingReport:
    """Weighted L^2 norm of the Hessian of a lambda_1 eigenfunction plus flat-coordinate correlations.

    `vector` is an eigenpair index into `result` or a coefficient vector; either
    must lie in the first nonzero cluster.
    """
    if space.is_complex:
        raise ParameterOutOfRange("splitting certificates are defined on real spaces")
    op = result.operator
    cluster = first_nonzero_cluster(result, zero_tol)
    if isinstance(vector, (int, np.integer)):
        if int(vector) not in cluster.members:
            raise NotFirstCluster(f"eigenpair {vector} is not in the first nonzero cluster")
        c = _vectors(result)[:, int(vector)]
    else:
        c = np.asarray(vector)
        lam_c = cluster.value
        res = np.linalg.norm(op.matvec(c) - lam_c * op.gram_matvec(c)) / op.gram_norm(c)
        if res > member_tol * max(1.0, lam_c):
            raise NotFirstCluster(f"vector is not a lambda_1 eigenfunction (residual {res:.2e})")
    f = evaluate_real(op, c, rule)
    w = f.weights
    unorm = math.sqrt(math.fsum((w * np.abs(f.values) ** 2).tolist()))
    hn = math.sqrt(math.fsum((w * np.sum(np.abs(f.hess) ** 2, axis=(1, 2))).tolist())) / unorm
    corr = []
    mass = math.fsum(w.tolist())
    umean = math.fsum((w * f.values).tolist()) / mass
    for a in f.flat_axes:
        t = f.coordinates[:, a]
        tm = math.fsum((w * t).tolist()) / mass
        num = abs(math.fsum((w * (f.values - umean) * (t - tm)).tolist()))
        den = math.sqrt(math.fsum((w * (f.values - umean) ** 2).tolist())
                        * math.fsum((w * (t - tm) ** 2).tolist()))
        corr.append(num / den)
    return SplittingReport(hn, tuple(corr), cluster.value, tolerance)


def sphere_factor_space(space: ModelSpace) -> ModelSpace:
    """The bare sphere factor S^{n-k}(r) of a product space, with f = 0."""
    if space.kind is not SpaceKind.PRODUCT:
        raise ParameterOutOfRange("not a product space")
    from .spaces import make_space

    return make_space(f"sphere:n={space.sphere_dim},r={space.radius!r}")

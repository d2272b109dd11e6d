"""Exact polytope volume and barycenter for the toric Futaki test.

The geometry core works in :class:`fractions.Fraction`.  Hull combinatorics
come from an exact monotone-chain hull in the plane and from Qhull (via
scipy) in dimension >= 3; Qhull only supplies the boundary triangulation,
every measure is then computed exactly from the original rational vertices.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegeneratePolytope, MalformedFile


def parse_coordinate(value) -> Fraction:
    """int, Fraction, decimal (number or string) or 'p/q' string -> exact Fraction."""
    if isinstance(value, bool):
        raise MalformedFile("booleans are not coordinates")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise MalformedFile("non-finite coordinate")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise MalformedFile(f"bad coordinate {value!r}") from exc
    raise MalformedFile(f"unsupported coordinate {value!r}")


def _det(rows) -> Fraction:
    """Exact determinant by fraction-valued Gaussian elimination."""
    a = [list(r) for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                for k in range(c, n):
                    a[r][k] -= f * a[c][k]
    return det


def _rank(points) -> int:
    base = points[0]
    rows = [[x - y for x, y in zip(p, base)] for p in points[1:]]
    rank = 0
    cols = len(base)
    for c in range(cols):
        p = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if p is None:
            continue
        rows[rank], rows[p] = rows[p], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][c] != 0:
                f = rows[r][c] / rows[rank][c]
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def _hull_2d(points):
    pts = sorted(set(points))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]  # counter-clockwise, no collinear points


def _boundary_simplices(points):
    """Index tuples of a triangulated boundary (Qhull), plus the extreme vertex indices."""
    from scipy.spatial import ConvexHull

    hull = ConvexHull(np.array([[float(x) for x in p] for p in points]), qhull_options="Qt")
    return [tuple(int(i) for i in s) for s in hull.simplices], sorted(int(i) for i in hull.vertices)


@dataclass(frozen=True)
class Polytope:
    vertices: tuple[tuple[Fraction, ...], ...]
    dimension: int

    @property
    def float_vertices(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices])


def make_polytope(points) -> Polytope:
    """Canonicalize: exact hull vertices, sorted lexicographically (counter-clockwise in 2-D)."""
    pts = [tuple(parse_coordinate(x) for x in p) for p in points]
    if not pts:
        raise DegeneratePolytope("no vertices")
    m = len(pts[0])
    if m < 1 or any(len(p) != m for p in pts):
        raise MalformedFile("all vertices need the same positive dimension")
    pts = sorted(set(pts))
    if len(pts) < m + 1 or _rank(pts) < m:
        raise DegeneratePolytope(f"points do not span R^{m}")
    if m == 1:
        verts = [pts[0], pts[-1]]
    elif m == 2:
        verts = _hull_2d(pts)
    else:
        _, ext = _boundary_simplices(pts)
        verts = [pts[i] for i in ext]
    return Polytope(tuple(verts), m)


def load_polytope(source: str) -> Polytope:
    """Parse ``{"vertices": [[...], ...]}``; coordinates are ints, decimals or "p/q" strings."""
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("vertices"), list):
        raise MalformedFile('expected an object with a "vertices" list')
    verts = data["vertices"]
    if not all(isinstance(v, list) for v in verts):
        raise MalformedFile("each vertex must be a list of coordinates")
    return make_polytope(verts)


def _format(x: Fraction):
    return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dump_polytope(p: Polytope) -> str:
    """Inverse of :func:`load_polytope`; rational coordinates round-trip exactly."""
    return json.dumps({"vertices": [[_format(x) for x in v] for v in p.vertices]})


def _simplices(p: Polytope, fan_vertex: int):
    """Simplices fanned from one vertex over the facets not containing it."""
    V = p.vertices
    m = p.dimension
    apex = V[fan_vertex]
    if m == 1:
        yield (apex, V[1 - fan_vertex])
        return
    if m == 2:
        n = len(V)
        for k in range(1, n - 1):
            i, j = (fan_vertex + k) % n, (fan_vertex + k + 1) % n
            yield (apex, V[i], V[j])
        return
    # boundary simplices in a facet through the apex give exactly zero measure
    for simplex in _boundary_simplices(list(V))[0]:
        if fan_vertex not in simplex:
            yield (apex,) + tuple(V[i] for i in simplex)


def _simplex_measure(s):
    m = len(s) - 1
    rows = [[x - y for x, y in zip(p, s[0])] for p in s[1:]]
    return abs(_det(rows)) / math.factorial(m)


def volume(p: Polytope, fan_vertex: int = 0) -> Fraction:
    return sum((_simplex_measure(s) for s in _simplices(p, fan_vertex)), Fraction(0))


def barycenter(p: Polytope, fan_vertex: int = 0) -> tuple[Fraction, ...]:
    """Lebesgue centroid: volume-weighted average of simplex centroids."""
    m = p.dimension
    total = Fraction(0)
    acc = [Fraction(0)] * m
    for s in _simplices(p, fan_vertex):
        vol = _simplex_measure(s)
        total += vol
        for i in range(m):
            acc[i] += vol * sum(q[i] for q in s) / (m + 1)
    return tuple(a / total for a in acc)


@dataclass(frozen=True)
class FutakiVerdict:
    status: str  # VANISHES or NONZERO
    barycenter: tuple[Fraction, ...]
    volume: Fraction
    direction: tuple[float, ...] | None
    tolerance: float

    def to_dict(self) -> dict:
        return {"check": "toric_futaki", "status": self.status,
                "barycenter": [_format(x) for x in self.barycenter],
                "barycenter_float": [float(x) for x in self.barycenter],
                "volume": _format(self.volume), "direction": self.direction,
                "tolerance": self.tolerance}


def futaki_vanishes(p: Polytope, tol: float | None = None) -> FutakiVerdict:
    """VANISHES iff |barycenter| <= tol (0 for exact rational input, 1e-12 otherwise)."""
    b = barycenter(p)
    vol = volume(p)
    if tol is None:
        tol = 0.0 if all(isinstance(x, Fraction) for v in p.vertices for x in v) else 1e-12
    norm = math.sqrt(sum(float(x) ** 2 for x in b))
    if norm <= tol and (tol > 0 or all(x == 0 for x in b)):
        return FutakiVerdict("VANISHES", b, vol, None, tol)
    return FutakiVerdict("NONZERO", b, vol, tuple(float(x) / norm for x in b), tol)


def monte_carlo_barycenter(p: Polytope, samples: int = 10**7, seed: int = 0,
                           chunk: int = 10**6) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sampling estimate of the barycenter and its standard errors."""
    V = p.float_vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    A, b = _halfspaces(p)
    rng = np.random.default_rng(seed)
    s1 = np.zeros(p.dimension)
    s2 = np.zeros(p.dimension)
    count = 0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = lo + (hi - lo) * rng.random((k, p.dimension))
        inside = np.all(x @ A.T <= b + 1e-15, axis=1)
        y = x[inside]
        s1 += y.sum(axis=0)
        s2 += (y * y).sum(axis=0)
        count += y.shape[0]
        done += k
    mean = s1 / count
    var = s2 / count - mean**2
    return mean, np.sqrt(var / count)


def _halfspaces(p: Polytope):
    """Float inequalities A x <= b of the polytope (facet normals)."""
    V = p.vertices
    m = p.dimension
    if m == 2:
        rows, rhs = [], []
        n = len(V)
        for i in range(n):
            a, c = V[i], V[(i + 1) % n]
            normal = (c[1] - a[1], a[0] - c[0])  # outward for counter-clockwise order
            rows.append([float(x) for x in normal])
            rhs.append(float(normal[0] * a[0] + normal[1] * a[1]))
        return np.array(rows), np.array(rhs)
    from scipy.spatial import ConvexHull

    hull = ConvexHull(p.float_vertices)
    return hull.equations[:, :-1], -hull.equations[:, -1]

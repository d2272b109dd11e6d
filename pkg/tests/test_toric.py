import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from wlaplab.errors import DegeneratePolytope, MalformedFile
from wlaplab.toric import (barycenter, dump_polytope, futaki_vanishes, load_polytope,
                           make_polytope, monte_carlo_barycenter, volume)

BLOWUP = [(-1, -1), (1, -1), (1, 0), (-1, 2)]


def test_reflexive_polygons_vanish():
    for verts in ([(1, 0), (0, 1), (-1, -1)], [(1, 1), (-1, 1), (-1, -1), (1, -1)],
                  [(1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)]):
        v = futaki_vanishes(make_polytope(verts))
        assert v.status == "VANISHES" and v.direction is None
        assert all(x == 0 for x in v.barycenter)


def test_truncated_triangle_exact_values():
    p = make_polytope(BLOWUP)
    assert volume(p) == 4
    assert barycenter(p) == (Fraction(-1, 6), Fraction(1, 12))
    v = futaki_vanishes(p)
    assert v.status == "NONZERO"
    assert np.allclose(v.direction, np.array([-2, 1]) / math.sqrt(5))


def test_monte_carlo_oracle_small_run():
    p = make_polytope(BLOWUP)
    mean, se = monte_carlo_barycenter(p, samples=200_000, seed=3)
    exact = np.array([float(x) for x in barycenter(p)])
    assert np.all(np.abs(mean - exact) <= 4 * se)


def test_hull_discards_interior_and_collinear_points():
    p = make_polytope([(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)])
    assert len(p.vertices) == 4 and volume(p) == 4


def test_three_dimensional_polytopes():
    cube = make_polytope([(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])
    assert volume(cube) == 8 and futaki_vanishes(cube).status == "VANISHES"
    octa = make_polytope([(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)])
    assert volume(octa) == Fraction(4, 3)
    simplex = make_polytope([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)])
    assert volume(simplex) == Fraction(1, 6)
    assert barycenter(simplex) == (Fraction(1, 4),) * 3
    wedge = make_polytope([(0, 0, 0), (2, 0, 0), (0, 1, 0), (0, 0, 3), (1, 1, 1), (2, 1, 0)])
    centers = {barycenter(wedge, fan_vertex=k) for k in range(len(wedge.vertices))}
    assert len(centers) == 1


def test_mixed_coordinate_formats_are_exact():
    p = load_polytope('{"vertices": [["1/3", 0], [0, 0.5], ["-1/3", "-1/2"]]}')
    assert Fraction(1, 3) in p.vertices[0] + p.vertices[1] + p.vertices[2]
    assert volume(p) == Fraction(1, 4)


@pytest.mark.parametrize("text", ["not json", '{"verts": []}', '{"vertices": [1, 2]}',
                                  '{"vertices": [[0, 0], [1]]}', '{"vertices": [["a", 0]]}',
                                  '{"vertices": [[true, 0], [1, 0], [0, 1]]}'])
def test_malformed_files(text):
    with pytest.raises(MalformedFile):
        load_polytope(text)


@pytest.mark.parametrize("points", [[], [(0, 0), (1, 1), (2, 2)], [(0, 0), (1, 0)],
                                    [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)]])
def test_degenerate_inputs(points):
    with pytest.raises(DegeneratePolytope):
        make_polytope(points)


def test_round_trip():
    p = make_polytope([(Fraction(1, 7), 0), (3, Fraction(-2, 9)), (0, 5), (-1, 1)])
    q = load_polytope(dump_polytope(p))
    assert q == p
    assert json.loads(dump_polytope(q)) == json.loads(dump_polytope(p))


coords = st.integers(-6, 6)


@settings(max_examples=40, deadline=None)
@given(pts=st.lists(st.tuples(coords, coords), min_size=3, max_size=8),
       T=st.tuples(coords, coords, coords, coords), b=st.tuples(coords, coords))
def test_affine_equivariance(pts, T, b):
    det = T[0] * T[3] - T[1] * T[2]
    assume(det != 0)
    try:
        p = make_polytope(pts)
    except DegeneratePolytope:
        assume(False)
    image = [(T[0] * x + T[1] * y + b[0], T[2] * x + T[3] * y + b[1]) for x, y in pts]
    q = make_polytope(image)
    cx, cy = barycenter(p)
    assert barycenter(q) == (T[0] * cx + T[1] * cy + b[0], T[2] * cx + T[3] * cy + b[1])
    assert volume(q) == abs(det) * volume(p)


@settings(max_examples=40, deadline=None)
@given(pts=st.lists(st.tuples(coords, coords), min_size=2, max_size=6))
def test_centrally_symmetric_polygons_vanish(pts):
    sym = pts + [(-x, -y) for x, y in pts]
    try:
        p = make_polytope(sym)
    except DegeneratePolytope:
        assume(False)
    assert futaki_vanishes(p).status == "VANISHES"


@settings(max_examples=20, deadline=None)
@given(pts=st.lists(st.tuples(coords, coords, coords), min_size=4, max_size=9))
def test_fan_vertex_independence_in_3d(pts):
    try:
        p = make_polytope(pts)
    except DegeneratePolytope:
        assume(False)
    vols = {volume(p, k) for k in range(len(p.vertices))}
    assert len(vols) == 1

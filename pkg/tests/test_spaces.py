import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlaplab.errors import ParameterOutOfRange, PointOutsideChart, TruncationInsufficient, UnknownKind
from wlaplab.spaces import (Convention, SpaceKind, default_rule, hermite_rule, list_spaces,
                            make_space, measure_density, parse_descriptor, sphere_rule,
                            truncated_rule, truncation_radius, weight_at, weighted_volume)


@pytest.mark.parametrize("desc, expected", [
    ("gaussian:n=1,lambda=0.5", math.sqrt(4 * math.pi)),
    ("gaussian:n=2,lambda=0.5", 4 * math.pi),
    ("gaussian:n=3,lambda=2.0", math.pi ** 1.5),
    ("sphere:n=2,r=2", 16 * math.pi),
    ("sphere:n=3,r=1", 2 * math.pi**2),
    ("product:n=3,k=1", 8 * math.pi * math.sqrt(4 * math.pi)),
    ("complex-gaussian:n=1", math.pi),
    ("complex-gaussian:n=2", math.pi**2),
])
def test_weighted_volume_closed_forms(desc, expected):
    space = make_space(desc)
    assert weighted_volume(space, default_rule(space)) == pytest.approx(expected, rel=1e-12)


def test_catalog_metadata():
    g = make_space("gaussian:n=2,lambda=0.7")
    assert g.kind is SpaceKind.GAUSSIAN and g.ric_f_lower_bound == 0.7
    assert g.weight_sign_convention is Convention.REAL
    s = make_space("sphere:n=3,r=2")
    assert s.ric_f_lower_bound == pytest.approx(2 / 4)
    c = make_space("sphere:n=2,r=1,convention=complex")
    assert c.is_complex and c.ric_f_lower_bound == 1.0
    p = make_space("product:n=4,k=1")
    assert p.sphere_dim == 3 and p.radius == pytest.approx(2.0) and p.ric_f_lower_bound == 0.5
    f = make_space("fano-cp1:pert=0.1;0;0")
    assert f.perturbation == (0.1,) and f.weight_sign_convention is Convention.COMPLEX


def test_dict_and_string_descriptors_agree():
    a = make_space("fano-cp1:pert=0.2;-0.1")
    b = make_space({"kind": "fano-cp1", "pert": [0.2, -0.1]})
    assert a.perturbation == b.perturbation
    assert parse_descriptor("gaussian:n=2,lambda=1") == ("gaussian", {"n": "2", "lambda": "1"})


@pytest.mark.parametrize("desc, err", [
    ("torus:n=2", UnknownKind),
    ("gaussian:n=0", ParameterOutOfRange),
    ("gaussian:n=2,lambda=-1", ParameterOutOfRange),
    ("sphere:n=1", ParameterOutOfRange),
    ("sphere:n=3,convention=complex", ParameterOutOfRange),
    ("product:n=3,k=2", ParameterOutOfRange),
    ("complex-gaussian:n=0", ParameterOutOfRange),
    ("fano-cp1:pert=0.6;0.6", ParameterOutOfRange),
    ("fano-cp1:pert=" + ";".join(["0.01"] * 9), ParameterOutOfRange),
])
def test_invalid_descriptors(desc, err):
    with pytest.raises(err):
        make_space(desc)


def test_points_outside_chart():
    with pytest.raises(PointOutsideChart):
        weight_at(make_space("sphere:n=2,r=1"), [1.0, 1.0, 0.0])
    with pytest.raises(PointOutsideChart):
        weight_at(make_space("gaussian:n=2"), [0.0])
    with pytest.raises(PointOutsideChart):
        weight_at(make_space("gaussian:n=1"), [np.inf])
    with pytest.raises(PointOutsideChart):
        weight_at(make_space("fano-cp1:pert=0"), [4.0, 0.0])


def test_truncation_radius_density_ratio():
    for lam in (0.25, 0.5, 2.0):
        R = truncation_radius(lam)
        assert math.exp(-lam * R * R / 2) == pytest.approx(1e-12, rel=1e-9)


def test_truncated_rule_tail_guard():
    space = make_space("gaussian:n=1,lambda=0.5")
    assert weighted_volume(space, truncated_rule(space, 40, 8)) == pytest.approx(
        math.sqrt(4 * math.pi), rel=1e-11)
    with pytest.raises(TruncationInsufficient):
        weighted_volume(space, truncated_rule(space, 10, 8, radius=3.0))


def test_sphere_rule_is_exact_for_polynomials():
    space = make_space("sphere:n=2,r=1")
    rule = sphere_rule(space, 12)
    z = rule.nodes[:, 2]
    assert np.sum(rule.weights * z**4) == pytest.approx(4 * math.pi / 5, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.2, 3.0), n=st.integers(1, 3))
def test_gaussian_mass_scales_with_lambda(lam, n):
    space = make_space(f"gaussian:n={n},lambda={lam!r}")
    vol = weighted_volume(space, hermite_rule(space, 6))
    assert vol == pytest.approx((2 * math.pi / lam) ** (n / 2), rel=1e-11)


@settings(max_examples=25, deadline=None)
@given(x=st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_gaussian_density_is_radial(x):
    space = make_space("gaussian:n=2,lambda=0.5")
    d = measure_density(space, np.array([x, [math.hypot(*x), 0.0]]))
    assert d[0] == pytest.approx(d[1], rel=1e-12)


def test_list_spaces_mentions_every_kind():
    text = list_spaces()
    for kind in SpaceKind:
        assert kind.value in text

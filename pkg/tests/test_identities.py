import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from wlaplab.errors import (NormalizationViolated, NotASoliton, ParameterOutOfRange,
                            SymbolicDerivativeUnavailable)
from wlaplab.geometry import ComplexFlat, EmbeddedGeometry
from wlaplab.identities import (bochner_residual_real, bochner_terms, complex_identity_residual,
                                harmonic_expressions, lsi_deficit, lsi_integrals, normalize_lsi,
                                soliton_identity_residual)
from wlaplab.spaces import make_space


@settings(max_examples=15, deadline=None)
@given(a=st.integers(0, 3), b=st.integers(0, 3), c=st.floats(-2, 2))
def test_bochner_on_gaussian_polynomials(a, b, c):
    space = make_space("gaussian:n=2,lambda=0.5")
    x1, x2 = EmbeddedGeometry(space).t
    u = x1**a * x2**b + c * x1
    assert bochner_residual_real(space, u).max_residual <= 1e-8


@pytest.mark.parametrize("desc, ell", [("sphere:n=2,r=1", 2), ("sphere:n=2,r=3", 3),
                                       ("sphere:n=4,r=1", 2)])
def test_bochner_on_harmonics(desc, ell):
    space = make_space(desc)
    for h in harmonic_expressions(space, ell):
        assert bochner_residual_real(space, h).max_residual <= 1e-8


def test_bochner_terms_agree_pointwise_on_the_sphere():
    space = make_space("sphere:n=3,r=2")
    X = EmbeddedGeometry(space).x
    geom, lhs, rhs = bochner_terms(space, X[0] * X[1] + X[3])
    nodes = np.array([[2.0, 0, 0, 0], [0, 2.0, 0, 0], [1.0, 1.0, 1.0, 1.0], [1.2, 0, -1.6, 0]])
    left = geom.lambdify(lhs)(nodes)
    assert np.max(np.abs(left)) > 0.1
    assert np.allclose(left, geom.lambdify(rhs)(nodes), atol=1e-12)


def test_bochner_on_product():
    space = make_space("product:n=3,k=1")
    g = EmbeddedGeometry(space)
    assert bochner_residual_real(space, g.x[1] * g.t[0] + g.t[0] ** 4).max_residual <= 1e-8


def test_complex_identity_on_monomials_in_one_variable():
    space = make_space("complex-gaussian:n=1")
    geom = ComplexFlat(1)
    z, w = geom.z[0], geom.zb[0]
    for u in (w, z * w, w**2 * z, w**3 + 2 * z**2 * w):
        rep = complex_identity_residual(space, u)
        assert rep.passed and rep.max_residual <= 1e-8


def test_complex_identity_terms_for_zbar():
    space = make_space("complex-gaussian:n=1")
    geom = ComplexFlat(1)
    rep = complex_identity_residual(space, geom.zb[0] ** 2)
    # d-bar d-bar of zbar^2 is constant, so the Hessian term is strictly positive
    assert rep.extras["hessian_term"] > 0
    lhs = complex(*rep.extras["lhs"])
    rhs = complex(*rep.extras["rhs"])
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_complex_identity_limits():
    assert complex_identity_residual(make_space("fano-cp1:pert=0"), sp.Integer(3)).max_residual == 0
    th, _ = sp.symbols("theta phi", real=True)
    with pytest.raises(SymbolicDerivativeUnavailable):
        complex_identity_residual(make_space("fano-cp1:pert=0"), sp.cos(th))
    with pytest.raises(ParameterOutOfRange):
        complex_identity_residual(make_space("gaussian:n=2"), sp.Integer(1))


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.1, 5.0), n=st.integers(1, 4))
def test_soliton_normalization_constant(lam, n):
    rep = soliton_identity_residual(make_space(f"gaussian:n={n},lambda={lam!r}"))
    assert rep.max_residual == 0.0
    assert rep.extras["normalization_constant"] == pytest.approx(n / 2, rel=1e-12)


def test_soliton_refusals_and_product_case():
    with pytest.raises(NotASoliton):
        soliton_identity_residual(make_space("sphere:n=2"))
    with pytest.raises(NotASoliton):
        soliton_identity_residual(make_space("product:n=3,k=1"))
    rep = soliton_identity_residual(make_space("product:n=3,k=1"), allow_product=True)
    assert rep.max_residual == 0.0 and rep.extras["normalization_constant"] == pytest.approx(0.5)


def test_lsi_constants_are_the_equality_case():
    space = make_space("gaussian:n=2,lambda=0.5")
    rep = lsi_deficit(space, sp.Integer(1))
    assert rep.extras["deficit"] == 0.0 and rep.extras["mass"] == 1.0


def test_lsi_exponentials_are_extremal_and_the_constant_is_sharp():
    space = make_space("gaussian:n=1,lambda=0.5")
    x = EmbeddedGeometry(space).t[0]
    u = normalize_lsi(space, sp.exp(x / 3))
    rep = lsi_deficit(space, u)
    assert abs(rep.extras["deficit"]) <= 1e-9
    assert lsi_deficit(space, u, C=0.95 * rep.extras["constant"]).verdict == "FAIL"


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(-3, 3).filter(lambda e: abs(e) > 1e-4))
def test_lsi_deficit_is_nonnegative(eps):
    space = make_space("gaussian:n=1,lambda=0.5")
    x = EmbeddedGeometry(space).t[0]
    assert lsi_deficit(space, normalize_lsi(space, 1 + eps * x)).extras["deficit"] >= -1e-8


def test_lsi_on_the_sphere():
    space = make_space("sphere:n=2,r=1")
    X = EmbeddedGeometry(space).x
    for eps in (0.1, 0.9):
        assert lsi_deficit(space, normalize_lsi(space, 1 + eps * X[2])).passed


def test_lsi_requires_normalization():
    space = make_space("gaussian:n=1,lambda=0.5")
    x = EmbeddedGeometry(space).t[0]
    with pytest.raises(NormalizationViolated):
        lsi_deficit(space, 1 + x)
    m2, _, _ = lsi_integrals(space, 1 + x)
    assert m2 == pytest.approx(1 + 1 / 0.5, rel=1e-10)

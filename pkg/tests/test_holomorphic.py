import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlaplab.eigensolve import first_nonzero_cluster, spectrum
from wlaplab.errors import NotOneEigenfunction, PotentialUnavailable
from wlaplab.geometry import ComplexFlat
from wlaplab.holomorphic import (FanoFunction, field_gram, futaki_from_eigenfunction,
                                 futaki_from_potential, grad_prime, holomorphy_defect,
                                 moment_relation_residual, rotation_eigenfunction)
from wlaplab.operators import FourierLatitudeGrid, assemble
from wlaplab.spaces import make_space

BASIS = FourierLatitudeGrid(3, 24, 96)


@pytest.fixture(scope="module")
def perturbed():
    space = make_space("fano-cp1:pert=0.25;-0.1")
    return space, spectrum(assemble(space, BASIS), 12)


@pytest.fixture(scope="module")
def round_cp1(fano_spaces):
    space = fano_spaces["0"]
    return space, spectrum(assemble(space, BASIS), 12)


def test_first_cluster_is_holomorphic(perturbed):
    space, result = perturbed
    for i in first_nonzero_cluster(result).members:
        rep = holomorphy_defect(space, FanoFunction.from_spectrum(result, i))
        assert rep.verdict == "PASS" and rep.dbar_defect <= 1e-8


def test_higher_eigenfunctions_are_not_holomorphic(round_cp1):
    """On the round sphere the l = 2 eigenfunctions have defect^2 = lam (lam - 1) ||u||^2."""
    space, result = round_cp1
    for i in np.flatnonzero(np.isclose(result.eigenvalues, 3.0)):
        rep = holomorphy_defect(space, FanoFunction.from_spectrum(result, i))
        assert rep.dbar_defect >= 0.1
        assert rep.dbar_defect == pytest.approx(np.sqrt(6.0) * rep.norm, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_linearity_under_complex_scaling(perturbed, re, im):
    space, result = perturbed
    c = complex(re, im)
    u = rotation_eigenfunction(space, result)
    base = holomorphy_defect(space, u)
    scaled = holomorphy_defect(space, c * u)
    assert scaled.norm == pytest.approx(abs(c) * base.norm, rel=1e-12, abs=1e-14)
    assert scaled.dbar_defect <= abs(c) * base.dbar_defect + 1e-12
    assert futaki_from_potential(space, c * u) == pytest.approx(
        c * futaki_from_potential(space, u), abs=1e-12)


def test_constants_are_not_one_eigenfunctions(perturbed):
    space, result = perturbed
    with pytest.raises(NotOneEigenfunction):
        futaki_from_eigenfunction(space, FanoFunction.from_spectrum(result, 0))


def test_rotation_field_and_futaki_routes(perturbed):
    space, result = perturbed
    u = rotation_eigenfunction(space, result)
    assert moment_relation_residual(space, u) <= 1e-8
    a = futaki_from_eigenfunction(space, u)
    b = futaki_from_potential(space, u)
    c = futaki_from_potential(space)
    assert abs(a) <= 1e-10 and abs(b) <= 1e-10 and abs(c) <= 1e-10


def test_field_gram_is_nondegenerate(perturbed):
    space, result = perturbed
    fns = [FanoFunction.from_spectrum(result, i) for i in first_nonzero_cluster(result).members]
    G = field_gram(space, fns)
    assert np.allclose(G, G.conj().T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(G)) > 1e-3


def test_futaki_needs_a_fano_space():
    with pytest.raises(PotentialUnavailable):
        futaki_from_potential(make_space("complex-gaussian:n=1"))


def test_complex_gaussian_holomorphy():
    space = make_space("complex-gaussian:n=2")
    geom = ComplexFlat(2)
    z1, z2 = geom.z
    w1, _ = geom.zb
    good = holomorphy_defect(space, w1 * z2**2)
    assert good.verdict == "PASS" and good.dbar_defect == 0.0
    bad = holomorphy_defect(space, w1**2)
    assert bad.dbar_defect > 0.1 and bad.eigen_residual > 0.1
    field = grad_prime(space, w1 * z2, nodes=[[1 + 2j, 3 - 1j]])
    # g^{i jbar} d_jbar u: only the z_1 component survives and equals z_2
    assert np.allclose(field.components, [[3 - 1j, 0]])

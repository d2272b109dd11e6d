import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlaplab.eigensolve import (align_cluster, check_lower_bound, cluster_eigenvalues,
                                first_nonzero, first_nonzero_cluster, spectrum,
                                sphere_factor_space, splitting_certificate)
from wlaplab.errors import AllZero, GramNotPD, NotFirstCluster, ParameterOutOfRange
from wlaplab.operators import (AssembledOperator, FourierLatitudeGrid, HermiteTensor,
                               SphericalHarmonics, assemble, finite_difference_operator,
                               make_basis)
from wlaplab.spaces import make_space


def _spectrum(desc, basis, count):
    space = make_space(desc)
    return space, spectrum(assemble(space, basis), count)


def test_gaussian_closed_form_with_multiplicities():
    _, r = _spectrum("gaussian:n=2,lambda=0.5", HermiteTensor(12, 2, 0.5), 10)
    assert np.allclose(r.eigenvalues, [0, .5, .5, 1, 1, 1, 1.5, 1.5, 1.5, 1.5], atol=1e-12)
    assert [c.multiplicity for c in r.clusters] == [1, 2, 3, 4]
    assert r.clusters[-1].truncated


@pytest.mark.parametrize("n, radius", [(2, 1.0), (2, 2.0), (3, 1.0), (4, 1.5)])
def test_sphere_closed_form(n, radius):
    basis = SphericalHarmonics(3, n, radius)
    _, r = _spectrum(f"sphere:n={n},r={radius}", basis, min(20, basis.cardinality))
    ells = np.arange(4)
    expected = ells * (ells + n - 1) / radius**2
    got = [c.value for c in r.clusters]
    assert np.allclose(got[: len(got) - 1], expected[: len(got) - 1], atol=1e-10)
    assert r.clusters[1].multiplicity == n + 1


def test_complex_sphere_convention_halves_the_spectrum():
    _, r = _spectrum("sphere:n=2,r=1,convention=complex", SphericalHarmonics(3, 2, 1.0), 16)
    assert [(round(c.value, 10), c.multiplicity) for c in r.clusters] == [
        (0.0, 1), (1.0, 3), (3.0, 5), (6.0, 7)]


def test_count_zero_and_out_of_range():
    space = make_space("gaussian:n=1")
    op = assemble(space, HermiteTensor(5, 1, 0.5))
    empty = spectrum(op, 0)
    assert empty.count == 0 and empty.eigenvectors.shape == (6, 0)
    with pytest.raises(ParameterOutOfRange):
        spectrum(op, 7)
    with pytest.raises(ParameterOutOfRange):
        spectrum(op, -1)


def test_all_zero_and_not_first_cluster():
    space, r = _spectrum("gaussian:n=1,lambda=0.5", HermiteTensor(10, 1, 0.5), 1)
    with pytest.raises(AllZero):
        first_nonzero(r)
    space, r = _spectrum("gaussian:n=1,lambda=0.5", HermiteTensor(10, 1, 0.5), 4)
    with pytest.raises(NotFirstCluster):
        splitting_certificate(space, r, 0)
    with pytest.raises(NotFirstCluster):
        splitting_certificate(space, r, r.eigenvectors[:, 2])


def test_gram_not_positive_definite():
    space = make_space("gaussian:n=1")
    op = AssembledOperator(space, HermiteTensor(1, 1, 0.5), "real",
                           stiffness=np.eye(2), gram=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(GramNotPD):
        spectrum(op, 1)


def test_solver_paths_agree():
    space = make_space("sphere:n=2,r=1")
    op = assemble(space, SphericalHarmonics(6, 2, 1.0))
    dense = spectrum(op, 20, method="dense")
    iterative = spectrum(op, 20, method="iterative")
    assert np.max(np.abs(dense.eigenvalues - iterative.eigenvalues)) <= 1e-10

    g = make_space("gaussian:n=2,lambda=0.5")
    basis = HermiteTensor(10, 2, 0.5)
    sep = spectrum(assemble(g, basis), 12)
    full = spectrum(assemble(g, basis, separable=False), 12, method="dense")
    assert sep.method == "separable"
    assert np.max(np.abs(sep.eigenvalues - full.eigenvalues)) <= 1e-10


def test_fano_blocks_match_dense():
    space = make_space("fano-cp1:pert=0.2;-0.1")
    op = assemble(space, FourierLatitudeGrid(2, 12, 64))
    blocks = spectrum(op, 15)
    dense = spectrum(op, 15, method="dense")
    assert blocks.method == "blocks" and len(blocks.labels) == 15
    assert np.max(np.abs(blocks.eigenvalues - dense.eigenvalues)) <= 1e-10


def test_eigenvalues_decrease_as_the_basis_grows():
    """Rayleigh-Ritz on nested spaces: each computed eigenvalue is nonincreasing."""
    space = make_space("fano-cp1:pert=0.3;-0.2;0.1")
    previous = None
    for degree in (6, 10, 14, 20, 28):
        vals = spectrum(assemble(space, FourierLatitudeGrid(2, degree, 96)), 10).eigenvalues
        if previous is not None:
            assert np.all(vals <= previous + 1e-10)
        previous = vals
    assert abs(first_nonzero(spectrum(assemble(space, FourierLatitudeGrid(2, 28, 96)), 10))[0]
               - 1.0) <= 1e-8


def test_finite_differences_converge():
    space = make_space("gaussian:n=1,lambda=0.5")
    errs = [abs(first_nonzero(spectrum(finite_difference_operator(space, h), 3))[0] - 0.5)
            for h in (0.4, 0.2, 0.1)]
    assert errs[0] > errs[1] > errs[2]
    # at least the second order of the scheme (the eigenvalue converges faster in practice)
    assert errs[1] / errs[2] >= 3.5


def test_results_are_deterministic_and_read_only():
    space = make_space("sphere:n=2,r=1")
    op = assemble(space, SphericalHarmonics(5, 2, 1.0))
    a = spectrum(op, 9, method="iterative", seed=3)
    b = spectrum(op, 9, method="iterative", seed=3)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)
    with pytest.raises(ValueError):
        a.eigenvalues[0] = 1.0


def test_lower_bound_reports():
    space, r = _spectrum("gaussian:n=1,lambda=0.5", HermiteTensor(10, 1, 0.5), 4)
    ok = check_lower_bound(r, space)
    assert ok.status == "PASS" and ok.equality
    probe = check_lower_bound(r, space, bound=0.6)
    assert probe.status == "FAIL" and not probe.equality
    sphere, rs = _spectrum("sphere:n=3,r=1", SphericalHarmonics(2, 3, 1.0), 6)
    strict = check_lower_bound(rs, sphere)
    assert strict.status == "PASS" and not strict.equality  # 3 > 2


def test_product_certificate_and_sphere_factor():
    space = make_space("product:n=3,k=1")
    basis = make_basis("product:lmax=3,deg=20", space)
    r = spectrum(assemble(space, basis), 6)
    cluster = first_nonzero_cluster(r)
    cert = splitting_certificate(space, r, cluster.members[0])
    assert cert.verdict == "PASS" and cert.best_correlation > 0.9999
    factor = sphere_factor_space(space)
    rf = spectrum(assemble(factor, SphericalHarmonics(3, 2, factor.radius)), 5)
    fcert = splitting_certificate(factor, rf, first_nonzero_cluster(rf).members[0])
    assert fcert.verdict == "FAIL" and fcert.hessian_norm > 0.1


def test_align_cluster_follows_references():
    space = make_space("gaussian:n=3,lambda=0.5")
    basis = HermiteTensor(4, 3, 0.5)
    r = spectrum(assemble(space, basis), 4)
    cluster = first_nonzero_cluster(r)
    refs = [basis.linear_coefficients(i) for i in (2, 0, 1)]
    V = align_cluster(r, cluster, refs)
    for j, ref in enumerate(refs):
        cos = abs(V[:, j] @ r.operator.gram_matvec(ref)) / r.operator.gram_norm(ref)
        assert cos == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50), st.integers(1, 5)), min_size=1, max_size=8))
def test_clustering_recovers_planted_multiplicities(levels):
    values = sorted({round(v, 3) for v, _ in levels})
    mult = {round(v, 3): m for v, m in levels}
    rng = np.random.default_rng(0)
    eig = np.sort(np.concatenate(
        [v + 1e-9 * rng.standard_normal(mult[v]) for v in values]))
    clusters = cluster_eigenvalues(eig, complete=True)
    assert [c.multiplicity for c in clusters] == [mult[v] for v in values]

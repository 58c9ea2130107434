import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmpdf import torus
from sdmpdf.basis import (FOURIER, HERMITE, IndexSet, StructureTable, build_index_set, build_structure_table,
                          effective_dimension, eval_basis_vector, export_structure_csv, read_complex_csv,
                          structure_coefficient, structure_table, weight)
from sdmpdf.checks import hermite_gauss, structure_oracle_error


def test_index_set_sizes_torus():
    lam, mho = build_index_set(FOURIER, 2, 2)
    assert (len(lam), len(mho)) == (25, 81)


def test_index_set_circle():
    lam, mho = build_index_set(FOURIER, 1, 1)
    assert lam.indices == ((-1,), (0,), (1,))
    assert mho.indices == tuple((k,) for k in range(-2, 3))


def test_index_set_hermite():
    lam, mho = build_index_set(HERMITE, 1, 2)
    assert lam.indices == ((0,), (1,), (2,))
    assert mho.indices == tuple((k,) for k in range(5))


def test_index_set_rejects_bad_input():
    with pytest.raises(ValueError):
        build_index_set("legendre", 1, 1)
    with pytest.raises(ValueError):
        build_index_set(FOURIER, 0, 1)
    with pytest.raises(ValueError):
        IndexSet("x", ((0, 1), (0,)))
    with pytest.raises(ValueError):
        IndexSet("x", ((0,), (0,)))


@pytest.mark.parametrize("family", [FOURIER, HERMITE])
@pytest.mark.parametrize("n,r", [(1, 1), (1, 3), (2, 1), (2, 2)])
def test_index_set_invariants(family, n, r):
    lam, mho = build_index_set(family, n, r)
    assert (0,) * n in lam and (0,) * n in mho
    assert list(lam.indices) == sorted(lam.indices)
    assert [mho.position(k) for k in mho] == list(range(len(mho)))
    sign = -1 if family == FOURIER else 1
    expected = {tuple(a + sign * b for a, b in zip(j, k)) for j in lam for k in lam}
    assert set(mho.indices) == expected


def test_structure_coefficient_examples():
    assert structure_coefficient(FOURIER, (1, 0), (0, 1), (1, -1)) == 1
    assert structure_coefficient(FOURIER, (1, 0), (0, 1), (1, 1)) == 0
    assert structure_coefficient(HERMITE, (1,), (1,), (0,)) == pytest.approx(1.0)
    assert structure_coefficient(HERMITE, (1,), (1,), (2,)) == pytest.approx(math.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        structure_coefficient(HERMITE, (-1,), (0,), (1,))


def test_hermite_coefficient_quadrature_example():
    x, w = np.polynomial.hermite_e.hermegauss(10)
    w = w / np.sqrt(2 * np.pi)
    val = np.sum(w * x * x * (x * x - 1) / np.sqrt(2))
    assert structure_coefficient(HERMITE, (1,), (1,), (2,)).real == pytest.approx(val, abs=1e-13)


@pytest.mark.parametrize("family", [FOURIER, HERMITE])
@pytest.mark.parametrize("n", [1, 2])
def test_structure_oracle(family, n):
    assert structure_oracle_error(family, n) <= 1e-10


def test_hermite_large_degree_uses_log_gamma():
    # 30 + 30 + 30: only the log-gamma branch applies; compare against exact integer arithmetic
    j = k = l = 30
    m = 45
    exact = math.sqrt(math.factorial(j) * math.factorial(k) * math.factorial(l)) / math.factorial(m - j) ** 3
    assert structure_coefficient(HERMITE, (j,), (k,), (l,)).real == pytest.approx(exact, rel=1e-10)


def test_circle_table_shift_and_gram(circle_table):
    E = circle_table.matrix((-1,))
    assert np.array_equal(E, np.diag([1, 1], k=1))
    np.testing.assert_array_equal(circle_table.matrix((0,)), np.eye(3))
    G = circle_table.gram()
    np.testing.assert_allclose(G, np.diag([1, 2, 3, 2, 1]))


@pytest.mark.parametrize("family,n,r", [(FOURIER, 2, 2), (FOURIER, 1, 3), (HERMITE, 1, 3), (HERMITE, 2, 2)])
def test_table_invariants(family, n, r):
    table = structure_table(family, n, r)
    np.testing.assert_array_equal(table.matrix((0,) * n), np.eye(table.N))
    assert all(np.any(E != 0) for E in table.matrices)
    assert not table.matrices.flags.writeable
    if family == FOURIER:
        for l in table.mho:
            np.testing.assert_array_equal(table.matrix(l).conj().T, table.matrix(tuple(-v for v in l)))
    else:
        assert np.all(table.matrices.imag == 0)
        np.testing.assert_array_equal(table.matrices, np.transpose(table.matrices, (0, 2, 1)))


def test_torus_table_size(torus_table):
    assert (torus_table.N, torus_table.L) == (25, 81)


def test_basis_vector_examples():
    lam, _ = build_index_set(FOURIER, 2, 2)
    np.testing.assert_allclose(eval_basis_vector(FOURIER, lam, np.zeros(2)), np.ones(25))
    lam1 = IndexSet("k", ((2,),))
    assert eval_basis_vector(FOURIER, lam1, [np.pi / 2])[0] == pytest.approx(-1.0)
    lamh, _ = build_index_set(HERMITE, 1, 2)
    np.testing.assert_allclose(eval_basis_vector(HERMITE, lamh, [0.0]), [1, 0, -1 / np.sqrt(2)], atol=1e-15)


def test_basis_vector_batch_shape():
    lam, _ = build_index_set(HERMITE, 2, 2)
    assert eval_basis_vector(HERMITE, lam, np.zeros((7, 2))).shape == (7, 9)
    with pytest.raises(ValueError):
        eval_basis_vector(HERMITE, lam, np.zeros((7, 3)))


def test_hermite_recurrence_stable_at_high_degree():
    lam = IndexSet("k", tuple((k,) for k in range(41)))
    pts, w = hermite_gauss(1, points=60)
    Phi = eval_basis_vector(HERMITE, lam, pts).real
    np.testing.assert_allclose((Phi.T * w) @ Phi, np.eye(41), atol=1e-9)


def test_weight_examples():
    assert weight(FOURIER, np.array([0.3, 1.2])) == pytest.approx(1 / (4 * np.pi**2))
    assert weight(HERMITE, np.array([0.0])) == pytest.approx(1 / np.sqrt(2 * np.pi))
    assert weight(HERMITE, np.array([1.0, 1.0])) == pytest.approx(np.exp(-1) / (2 * np.pi))


def test_weights_integrate_to_one():
    M = 64
    assert torus.integrate(np.full((M, M), weight(FOURIER, np.zeros(2)))) == pytest.approx(1.0)
    x = np.linspace(-12, 12, 4001)
    assert np.trapezoid(weight(HERMITE, x[:, None]), x) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("family,n,r,pts", [(FOURIER, 2, 2, "torus"), (HERMITE, 1, 4, "gh"), (HERMITE, 2, 3, "gh")])
def test_orthonormality(family, n, r, pts):
    lam, _ = build_index_set(family, n, r)
    if pts == "torus":
        M = 4 * r + 1
        x, w = torus.mesh_points(n, M), np.full(M**n, 1.0 / M**n)
    else:
        x, w = hermite_gauss(n, points=2 * r + 2)
    Phi = eval_basis_vector(family, lam, x)
    np.testing.assert_allclose((Phi.conj().T * w) @ Phi, np.eye(len(lam)), atol=1e-10)


@pytest.mark.parametrize("family,n,r", [(FOURIER, 2, 2), (HERMITE, 2, 2), (HERMITE, 1, 4)])
def test_outer_product_reconstruction(family, n, r):
    table = structure_table(family, n, r)
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, size=(100, n))
    Phi = eval_basis_vector(family, table.lam, x)
    Phi_mho = eval_basis_vector(family, table.mho, x)
    lhs = np.einsum("pj,pk->pjk", Phi, Phi.conj())
    rhs = np.einsum("pl,ljk->pjk", Phi_mho, table.matrices)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@pytest.mark.parametrize("n,r", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_effective_dimension_fourier_is_full(n, r):
    table = structure_table(FOURIER, n, r)
    assert effective_dimension(table) == table.L


def test_effective_dimension_hermite_small():
    assert effective_dimension(structure_table(HERMITE, 1, 1)) == 3


def test_effective_dimension_detects_duplicates(circle_table):
    mats = np.concatenate([circle_table.matrices, circle_table.matrices[:1]])
    mho = IndexSet("mho", circle_table.mho.indices + ((9,),))
    dup = StructureTable(FOURIER, circle_table.lam, mho, mats)
    assert effective_dimension(dup) == circle_table.L < dup.L


def test_structure_csv_roundtrip(tmp_path, hermite_table):
    paths = export_structure_csv(hermite_table, tmp_path)
    assert len(paths) == hermite_table.L
    mat, header = read_complex_csv(tmp_path / "E_2.csv")
    np.testing.assert_array_equal(mat, hermite_table.matrix((2,)))
    assert header == []


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=3, max_size=3))
def test_hermite_coefficient_symmetric(jkl):
    vals = {structure_coefficient(HERMITE, (a,), (b,), (c,)) for a, b, c in itertools.permutations(jkl)}
    assert len(vals) == 1

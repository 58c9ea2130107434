import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmpdf import torus
from sdmpdf.approx import moments_from_grid
from sdmpdf.basis import FOURIER, HERMITE, eval_basis_vector, structure_table
from sdmpdf.errors import ConsistencyError
from sdmpdf.sdm import (Sdm, coefficient_map, eval_pdf, load_sdm, moment, pdf_on_mesh, random_sdm, renyi_vs_weight,
                        save_sdm, sos_decomposition, validate)


def test_validate_uniform(torus_table):
    rep = validate(Sdm.uniform(torus_table.lam))
    assert rep.passed and rep.min_eigenvalue == pytest.approx(1 / 25) and rep.rank == 25


def test_validate_rank_one(torus_table, rng):
    rep = validate(Sdm.pure(rng.standard_normal(25) + 1j * rng.standard_normal(25), torus_table.lam))
    assert rep.passed and rep.rank == 1


def test_validate_rejects_negative_eigenvalue():
    from sdmpdf.basis import IndexSet
    lam = IndexSet("lambda", ((0,), (1,)))
    rep = validate(Sdm(np.diag([2.0, -1.0]), lam))
    assert not rep.passed and rep.min_eigenvalue == pytest.approx(-1.0)


def test_validate_rejects_wrong_index_set(torus_table, circle_table):
    with pytest.raises(ValueError):
        validate(Sdm.uniform(torus_table.lam), circle_table.lam)
    with pytest.raises(ValueError):
        Sdm(np.eye(3) / 3, torus_table.lam)


def test_sdm_is_read_only(circle_table):
    S = Sdm.uniform(circle_table.lam)
    with pytest.raises(ValueError):
        S.matrix[0, 0] = 1.0


def test_uniform_pdf_is_constant(torus_table, rng):
    x = rng.uniform(0, 2 * np.pi, (10, 2))
    np.testing.assert_allclose(eval_pdf(Sdm.uniform(torus_table.lam), torus_table, x), 1 / (4 * np.pi**2))


def test_rank_one_circle_pdf(circle_table):
    S = Sdm.pure(np.ones(3), circle_table.lam)
    x = np.linspace(0, 2 * np.pi, 17)[:, None]
    expected = (3 + 4 * np.cos(x[:, 0]) + 2 * np.cos(2 * x[:, 0])) / 3 / (2 * np.pi)
    np.testing.assert_allclose(eval_pdf(S, circle_table, x), expected, atol=1e-15)
    np.testing.assert_allclose(coefficient_map(S, circle_table), [1 / 3, 2 / 3, 1, 2 / 3, 1 / 3])


def test_pdf_scalar_point(circle_table):
    assert isinstance(eval_pdf(Sdm.uniform(circle_table.lam), circle_table, np.array([0.4])), float)


def test_pdf_normalization_and_nonnegativity(torus_table, rng):
    S = random_sdm(torus_table.lam, rng)
    vals = pdf_on_mesh(S, torus_table, 200)
    assert torus.integrate(vals) == pytest.approx(1.0, abs=1e-10)
    assert vals.min() >= 0


def test_pdf_on_mesh_matches_pointwise(torus_table, rng):
    S = random_sdm(torus_table.lam, rng)
    M = 12
    direct = eval_pdf(S, torus_table, torus.mesh_points(2, M)).reshape(M, M)
    np.testing.assert_allclose(pdf_on_mesh(S, torus_table, M), direct, atol=1e-14)


def test_non_hermitian_matrix_raises(circle_table):
    bad = np.eye(3, dtype=complex) / 3
    bad[0, 1] = 0.3j
    with pytest.raises(ConsistencyError):
        eval_pdf(Sdm(bad, circle_table.lam), circle_table, np.array([[0.7]]))


def test_pdf_linear_in_S(torus_table, rng):
    S1, S2 = random_sdm(torus_table.lam, rng), random_sdm(torus_table.lam, rng)
    x = rng.uniform(0, 2 * np.pi, (30, 2))
    mix = Sdm(0.3 * S1.matrix + 0.7 * S2.matrix, torus_table.lam)
    np.testing.assert_allclose(eval_pdf(mix, torus_table, x),
                               0.3 * eval_pdf(S1, torus_table, x) + 0.7 * eval_pdf(S2, torus_table, x), atol=1e-12)


def test_coefficient_map_basics(torus_table, rng):
    c = coefficient_map(Sdm.uniform(torus_table.lam), torus_table)
    e0 = np.zeros(81)
    e0[torus_table.mho.zero] = 1
    np.testing.assert_allclose(c, e0, atol=1e-16)
    S = random_sdm(torus_table.lam, rng)
    c = coefficient_map(S, torus_table)
    assert c[torus_table.mho.zero] == pytest.approx(1.0)
    flipped = [torus_table.mho.position(tuple(-v for v in l)) for l in torus_table.mho]
    np.testing.assert_allclose(c[flipped], c.conj(), atol=1e-15)


def test_moment_outside_support(torus_table, rng):
    S = random_sdm(torus_table.lam, rng)
    assert moment(S, torus_table, (0, 0)) == pytest.approx(1.0)
    assert moment(S, torus_table, (5, 0)) == 0


@pytest.mark.parametrize("seed", range(5))
def test_moment_quadrature_oracle(torus_table, seed):
    S = random_sdm(torus_table.lam, np.random.default_rng(seed))
    mv = moments_from_grid(pdf_on_mesh(S, torus_table, 40), torus_table)
    np.testing.assert_allclose(mv.values, [moment(S, torus_table, l) for l in torus_table.mho], atol=1e-10)


def test_hermite_moment_quadrature(rng):
    table = structure_table(HERMITE, 1, 3)
    S = random_sdm(table.lam, rng)
    x, w = np.polynomial.hermite_e.hermegauss(20)
    x = x[:, None]
    p_over_nu = eval_pdf(S, table, x) * np.sqrt(2 * np.pi) * np.exp(x[:, 0] ** 2 / 2)
    quad = (w / np.sqrt(2 * np.pi) * p_over_nu) @ eval_basis_vector(HERMITE, table.mho, x)
    np.testing.assert_allclose(quad, coefficient_map(S, table), atol=1e-10)


def test_renyi_uniform_zero_and_nonnegative(torus_table, rng):
    assert renyi_vs_weight(Sdm.uniform(torus_table.lam), torus_table) == pytest.approx(0.0, abs=1e-15)
    assert renyi_vs_weight(random_sdm(torus_table.lam, rng), torus_table) >= 0


@pytest.mark.parametrize("seed", range(5))
def test_renyi_quadrature_oracle(torus_table, seed):
    S = random_sdm(torus_table.lam, np.random.default_rng(seed))
    p = pdf_on_mesh(S, torus_table, 40)
    direct = np.log((2 * np.pi) ** 2 * torus.integrate(p**2))
    assert renyi_vs_weight(S, torus_table) == pytest.approx(direct, abs=1e-9)


def test_sos_uniform_and_rank_one(torus_table, rng):
    sos = sos_decomposition(Sdm.uniform(torus_table.lam))
    np.testing.assert_allclose(sos.weights, 1 / 25)
    u = rng.standard_normal(25) + 1j * rng.standard_normal(25)
    sos = sos_decomposition(Sdm.pure(u, torus_table.lam))
    np.testing.assert_allclose(sos.weights, np.eye(25)[0], atol=1e-12)
    col = sos.mixers[:, 0]
    assert abs(abs(np.vdot(col, u)) - np.linalg.norm(u)) < 1e-10


def test_sos_invariants_and_phase(torus_table, rng):
    S = random_sdm(torus_table.lam, rng, rank=6)
    sos = sos_decomposition(S)
    U = sos.mixers
    assert sos.weights.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(sos.weights) <= 1e-15) and sos.weights.min() >= 0
    np.testing.assert_allclose(U.conj().T @ U, np.eye(25), atol=1e-10)
    np.testing.assert_allclose(U @ np.diag(sos.weights) @ U.conj().T, S.matrix, atol=1e-10)
    for j in range(25):
        first = U[np.flatnonzero(np.abs(U[:, j]) > 1e-12)[0], j]
        assert first.imag == 0 and first.real > 0


@pytest.mark.parametrize("family,n,r", [(FOURIER, 2, 2), (HERMITE, 2, 2)])
def test_sos_pdf_matches(family, n, r, rng):
    table = structure_table(family, n, r)
    S = random_sdm(table.lam, rng)
    x = rng.uniform(-2, 2, (50, n))
    np.testing.assert_allclose(sos_decomposition(S).pdf(table, x), eval_pdf(S, table, x), atol=1e-10)


def test_save_load_roundtrip(tmp_path, torus_table, rng):
    S = random_sdm(torus_table.lam, rng)
    save_sdm(tmp_path / "s.csv", S, FOURIER, 2)
    assert (tmp_path / "s.csv").read_text().startswith("# sdm n=2 r=2 family=fourier")
    np.testing.assert_array_equal(load_sdm(tmp_path / "s.csv", torus_table.lam).matrix, S.matrix)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.booleans())
def test_random_sdm_is_valid(seed, rank, real):
    table = structure_table(FOURIER, 1, 4)
    S = random_sdm(table.lam, np.random.default_rng(seed), rank=rank, real=real)
    rep = validate(S)
    assert rep.passed and rep.rank == rank

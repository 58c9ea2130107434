"""Stochastic density matrices and the PDF each one defines.

An SDM is a Hermitian positive semi-definite unit-trace matrix ``S``; the
density is ``p(x) = nu(x) Phi(x)^* S Phi(x)``.  Its generalized moments are
``<E_l, S>`` for ``l`` in mho and zero elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import torus
from .basis import (FOURIER, IndexSet, StructureTable, eval_basis_vector, read_complex_csv, weight,
                    write_complex_csv)
from .errors import ConsistencyError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
PSD_TOL = 1e-10


@dataclass(frozen=True)
class Sdm:
    matrix: np.ndarray
    lam: IndexSet

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        N = len(self.lam)
        if m.shape != (N, N):
            raise ValueError(f"SDM has shape {m.shape}, index set needs ({N}, {N})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def uniform(cls, lam: IndexSet) -> "Sdm":
        N = len(lam)
        return cls(np.eye(N) / N, lam)

    @classmethod
    def pure(cls, u, lam: IndexSet) -> "Sdm":
        """Rank-one SDM ``u u^*`` for a vector u (normalized here)."""
        u = np.asarray(u, dtype=complex)
        u = u / np.linalg.norm(u)
        return cls(np.outer(u, u.conj()), lam)


def hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def random_sdm(lam: IndexSet, rng: np.random.Generator, rank: int | None = None, real: bool = False,
               floor: float = 0.0) -> Sdm:
    """Random SDM ``W W^* / Tr(W W^*)`` mixed with ``floor * I/N``."""
    N = len(lam)
    k = rank or N
    W = rng.standard_normal((N, k))
    if not real:
        W = W + 1j * rng.standard_normal((N, k))
    S = W @ W.conj().T
    S = hermitize(S / np.trace(S).real)
    S = (1 - floor) * S + floor * np.eye(N) / N
    return Sdm(S, lam)


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_defect: float
    trace_deviation: float
    min_eigenvalue: float
    rank: int
    passed: bool


def validate(S: Sdm, lam: IndexSet | None = None) -> ValidationReport:
    """Check Hermiticity, unit trace and positive semi-definiteness against the package tolerances."""
    if lam is not None and S.N != len(lam):
        raise ValueError(f"SDM order {S.N} does not match index set size {len(lam)}")
    m = S.matrix
    herm = float(np.max(np.abs(m - m.conj().T)))
    tr = float(abs(np.trace(m) - 1))
    ev = np.linalg.eigvalsh(hermitize(m))
    rank = int(np.sum(ev > max(PSD_TOL, 1e-10 * ev[-1])))
    passed = herm <= HERMITIAN_TOL and tr <= TRACE_TOL and ev[0] >= -PSD_TOL
    return ValidationReport(herm, tr, float(ev[0]), rank, passed)


def _real_part(q: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.abs(q.real))
    if np.any(np.abs(q.imag) > HERMITIAN_TOL * scale):
        raise ConsistencyError(f"quadratic form has imaginary part {np.max(np.abs(q.imag)):.3g}; SDM not Hermitian?")
    return q.real


def eval_pdf(S: Sdm, table: StructureTable, x) -> np.ndarray | float:
    """``p(x) = nu(x) Phi(x)^* S Phi(x)`` at one point (n,) or a batch (P, n)."""
    x = np.asarray(x, dtype=float)
    Phi = np.atleast_2d(eval_basis_vector(table.family, table.lam, x))
    q = np.einsum("pj,jk,pk->p", Phi.conj(), S.matrix, Phi)
    val = weight(table.family, np.atleast_2d(x)) * _real_part(q)
    val = np.where((val < 0) & (val >= -1e-12), 0.0, val)
    return float(val[0]) if x.ndim == 1 else val


def coefficient_map(S: Sdm | np.ndarray, table: StructureTable) -> np.ndarray:
    """``C(S) = (<E_l, S>)_{l in mho}`` with ``<X, Y> = Tr(X^* Y)``."""
    m = S.matrix if isinstance(S, Sdm) else np.asarray(S)
    return table.flat.conj() @ m.ravel()


def moment(S: Sdm, table: StructureTable, m) -> complex:
    """Generalized moment ``E_p phi_m``; exactly zero outside mho."""
    if m not in table.mho:
        return 0j
    E = table.matrix(m)
    return complex(np.vdot(E, S.matrix))


def renyi_vs_weight(S: Sdm, table: StructureTable) -> float:
    """Second-order Renyi entropy of p_S relative to the weight, from its moments."""
    c = coefficient_map(S, table)
    off = np.abs(np.delete(c, table.mho.zero)) ** 2
    return float(np.log1p(np.sum(off)))


def pdf_on_mesh(S: Sdm | np.ndarray, table: StructureTable, M: int) -> np.ndarray:
    """Torus only: p_S on the uniform M^n mesh, via ``(2 pi)^-n sum_l C_l exp(-i l.x)``."""
    if table.family != FOURIER:
        raise ValueError("mesh evaluation is defined for the Fourier family")
    n = table.n
    c = coefficient_map(S, table)
    vals = torus.synthesize(c, -table.mho.array, n, M) * (2 * np.pi) ** (-n)
    return _real_part(vals)


@dataclass(frozen=True)
class SosDecomposition:
    weights: np.ndarray
    mixers: np.ndarray

    def functions(self, table: StructureTable, x) -> np.ndarray:
        """``theta_j(x) = sum_k conj(u_kj) phi_k(x)``, shape (..., N)."""
        Phi = eval_basis_vector(table.family, table.lam, x)
        return Phi @ self.mixers.conj()

    def pdf(self, table: StructureTable, x) -> np.ndarray:
        """Density as the mixture ``nu sum_j sigma_j |theta_j|^2``."""
        th = self.functions(table, x)
        return weight(table.family, x) * (np.abs(th) ** 2 @ self.weights)


def sos_decomposition(S: Sdm) -> SosDecomposition:
    """Eigen-decomposition ``S = U diag(sigma) U^*`` with descending, clamped weights.

    Each eigenvector is rotated so that its first entry above 1e-12 in modulus is
    real and positive.
    """
    ev, U = np.linalg.eigh(hermitize(S.matrix))
    ev, U = ev[::-1], U[:, ::-1].copy()
    ev = np.where((ev < 0) & (ev >= -PSD_TOL), 0.0, ev)
    if ev.min() < 0:
        raise ValueError(f"SDM has eigenvalue {ev.min():.3g} below the PSD tolerance")
    ev = np.clip(ev, 0.0, 1.0)
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size:
            z = U[nz[0], j]
            U[:, j] *= abs(z) / z
    return SosDecomposition(ev, U)


def save_sdm(path, S: Sdm, family: str, r: int) -> None:
    write_complex_csv(Path(path), S.matrix, header=f"# sdm n={S.lam.n} r={r} family={family}")


def load_sdm(path, lam: IndexSet) -> Sdm:
    mat, _ = read_complex_csv(path)
    return Sdm(mat, lam)

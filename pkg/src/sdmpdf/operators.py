"""Linear operators on Hermitian matrices built from the structure matrices.

``A(X) = sum_l <E_l, X> E_l`` is the Hessian of the quadratic proximity, and
``F_S(X) = A(X) + mu S^-1 X S^-1`` is the Hessian of the barrier-regularized
objective at ``S``.  ``F_S`` is inverted either densely on the vectorized
N^2-dimensional space or through the low-rank structure of ``A`` (Woodbury).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .basis import StructureTable
from .errors import IllConditionedError, PositivityError

COND_LIMIT = 1e14


def hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def _check_square(table: StructureTable, X: np.ndarray) -> None:
    if X.shape != (table.N, table.N):
        raise ValueError(f"expected an {table.N}x{table.N} matrix, got {X.shape}")


def apply_A(table: StructureTable, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    _check_square(table, X)
    F = table.flat
    c = F.conj() @ X.ravel()
    return hermitize((c @ F).reshape(table.N, table.N))


def vec(X: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(X).ravel(order="F")


def unvec(v: np.ndarray, N: int) -> np.ndarray:
    return v.reshape((N, N), order="F")


def _cholesky(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise PositivityError("S is not positive definite (Cholesky failed)", state=S) from exc


class FOperator:
    """``F_S`` at a fixed positive definite ``S``, factorized once for repeated solves.

    ``method="dense"`` factors the N^2 x N^2 matrix
    ``sum_l vec(E_l) vec(E_l)^* + mu conj(S^-1) kron S^-1``;
    ``method="lowrank"`` solves through the L x L capacitance matrix
    ``I + (<E_l, S E_m S>/mu)``, which is much cheaper when L << N^2.
    """

    def __init__(self, S: np.ndarray, table: StructureTable, mu: float, method: str = "lowrank"):
        if mu <= 0:
            raise ValueError("mu must be positive")
        if method not in ("dense", "lowrank"):
            raise ValueError(f"unknown method {method!r}")
        S = hermitize(np.asarray(S, dtype=complex))
        _check_square(table, S)
        _cholesky(S)
        self.S, self.table, self.mu, self.method = S, table, mu, method
        ev = np.linalg.eigvalsh(S)
        self.condition_bound = (table.gram_norm + mu / ev[0] ** 2) / (mu / ev[-1] ** 2)
        if self.condition_bound > COND_LIMIT:
            raise IllConditionedError(f"F_S condition bound {self.condition_bound:.3g} exceeds {COND_LIMIT:.0e}")
        N, L = table.N, table.L
        if method == "dense":
            Sinv = np.linalg.inv(S)
            W = np.stack([vec(E) for E in table.matrices], axis=1)  # (N^2, L)
            mat = W @ W.conj().T + mu * np.kron(Sinv.conj(), Sinv)
            self._matrix = hermitize(mat)
            self._factor = sla.cho_factor(self._matrix)
        else:
            self._SES = S @ table.matrices @ S  # (L, N, N)
            cap = table.flat.conj() @ self._SES.reshape(L, -1).T / mu
            self._factor = sla.cho_factor(hermitize(np.eye(L) + cap))
        self._Sinv = None

    @property
    def Sinv(self) -> np.ndarray:
        if self._Sinv is None:
            self._Sinv = hermitize(np.linalg.inv(self.S))
        return self._Sinv

    def matrix(self) -> np.ndarray:
        """The vectorized (column-major) N^2 x N^2 matrix of F_S."""
        if self.method == "dense":
            return self._matrix
        W = np.stack([vec(E) for E in self.table.matrices], axis=1)
        return hermitize(W @ W.conj().T + self.mu * np.kron(self.Sinv.conj(), self.Sinv))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        return hermitize(apply_A(self.table, X) + self.mu * self.Sinv @ X @ self.Sinv)

    def solve(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=complex)
        _check_square(self.table, Y)
        N = self.table.N
        if self.method == "dense":
            return hermitize(unvec(sla.cho_solve(self._factor, vec(Y)), N))
        PY = self.S @ Y @ self.S / self.mu
        rhs = self.table.flat.conj() @ PY.ravel()
        c = sla.cho_solve(self._factor, rhs)
        X = PY - np.tensordot(c, self._SES, axes=1) / self.mu
        return hermitize(X)


def apply_F(S: np.ndarray, table: StructureTable, mu: float, X: np.ndarray) -> np.ndarray:
    """``F_S(X) = A(X) + mu S^-1 X S^-1``."""
    S = hermitize(np.asarray(S, dtype=complex))
    L = _cholesky(S)
    Sinv = sla.cho_solve((L, True), np.eye(len(S)))
    X = np.asarray(X, dtype=complex)
    return hermitize(apply_A(table, X) + mu * Sinv @ X @ Sinv)


def solve_F(S: np.ndarray, table: StructureTable, mu: float, Y: np.ndarray, method: str = "dense") -> np.ndarray:
    """The unique Hermitian X with ``F_S(X) = Y``."""
    return FOperator(S, table, mu, method=method).solve(Y)

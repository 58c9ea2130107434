"""Barrier-regularized quadratic fitting of an SDM to a target density.

The target ``f`` enters only through its generalized moments ``E_f phi_l``
(a :class:`MomentVector`) and, for the proximity value, through
``ln int f^2 / nu``.  The optimal SDM minimizes

    J(S) = 1/2 <S, A(S)> - <B(f), S> - mu ln det S     over Tr S = 1,

whose stationarity condition is ``A(S) - mu S^-1 = lambda I + B(f)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import torus
from .basis import FOURIER, IndexSet, StructureTable, eval_basis_vector, weight
from .errors import PositivityError
from .operators import FOperator, apply_A, hermitize
from .sdm import Sdm, coefficient_map, renyi_vs_weight

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MomentVector:
    """Generalized moments ``E_f phi_l`` indexed by ``indices`` (usually mho)."""

    values: np.ndarray
    indices: IndexSet

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != len(self.indices):
            raise ValueError(f"{v.size} moments for {len(self.indices)} indices")
        object.__setattr__(self, "values", v)

    def at(self, l) -> complex:
        return self.values[self.indices.position(l)] if l in self.indices else 0j

    def restrict(self, target: IndexSet) -> np.ndarray:
        """Values on ``target``, zero where this vector has no entry."""
        if target.indices == self.indices.indices:
            return self.values
        return np.array([self.at(l) for l in target])

    @classmethod
    def of_sdm(cls, S: Sdm, table: StructureTable) -> "MomentVector":
        """Moments of p_S itself: ``E_{p_S} phi_l = <E_l, S>``."""
        return cls(coefficient_map(S, table), table.mho)

    @classmethod
    def of_weight(cls, table: StructureTable) -> "MomentVector":
        v = np.zeros(table.L, dtype=complex)
        v[table.mho.zero] = 1.0
        return cls(v, table.mho)


def moments_to_B(table: StructureTable, mv: MomentVector) -> np.ndarray:
    """``B(f) = sum_l (E_f phi_l) E_l``."""
    v = mv.restrict(table.mho)
    return hermitize(np.tensordot(v, table.matrices, axes=1))


def proximity(table: StructureTable, mv: MomentVector, renyi_f: float, S: Sdm) -> float:
    """``D(f, p_S) = 1/2 ||(f - p_S)/nu||_H^2`` from moments and the Renyi entropy of f."""
    if not np.isfinite(renyi_f):
        raise ValueError("renyi_f must be finite")
    c = coefficient_map(S, table)
    cross = np.sum(c * mv.restrict(table.mho).conj())
    if abs(cross.imag) > 1e-10:
        raise ValueError(f"cross term has imaginary part {cross.imag:.3g}; moments not those of a real density")
    val = 0.5 * (np.exp(renyi_f) + np.exp(renyi_vs_weight(S, table))) - cross.real
    return float(max(val, 0.0)) if val > -1e-12 else float(val)


def objective(table: StructureTable, B: np.ndarray, mu: float, S: np.ndarray) -> float:
    """``J(S)``; raises :class:`PositivityError` outside the positive definite cone."""
    try:
        Lc = np.linalg.cholesky(hermitize(S))
    except np.linalg.LinAlgError as exc:
        raise PositivityError("S is not positive definite", state=S) from exc
    c = coefficient_map(S, table)
    logdet = 2 * np.sum(np.log(np.diag(Lc).real))
    return float(0.5 * np.sum(np.abs(c) ** 2) - np.vdot(B, S).real - mu * logdet)


def gradient(table: StructureTable, B: np.ndarray, mu: float, S: np.ndarray) -> np.ndarray:
    """Unconstrained gradient ``A(S) - B - mu S^-1`` of J."""
    return hermitize(apply_A(table, S) - B - mu * np.linalg.inv(S))


@dataclass
class StaticFitResult:
    S: Sdm
    lagrange: float
    residual: float
    iterations: int
    barrier: float
    converged: bool
    objective_history: list = field(default_factory=list)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.S.matrix)[0])

    def report(self, proximity_value: float | None = None) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "lagrange": self.lagrange,
                "barrier": self.barrier, "min_eigenvalue": self.min_eigenvalue,
                "proximity_value": proximity_value, "converged": self.converged}


def optimality_residual(table: StructureTable, B: np.ndarray, mu: float, S: np.ndarray) -> tuple[float, float]:
    """Multiplier ``lambda = <I, A(S) - mu S^-1 - B>/N`` and the Frobenius defect of the stationarity condition."""
    G = gradient(table, B, mu, S)
    lam = float(np.trace(G).real / table.N)
    return lam, float(np.linalg.norm(G - lam * np.eye(table.N)))


CONTINUATION_START = 0.1


def _newton(table: StructureTable, B: np.ndarray, mu: float, S: np.ndarray, tol: float, max_iter: int,
            method: str) -> tuple[np.ndarray, float, float, int, bool, list]:
    N = table.N
    I = np.eye(N)
    J = objective(table, B, mu, S)
    history = [J]
    it = 0
    while True:
        lam, res = optimality_residual(table, B, mu, S)
        if res <= tol:
            return S, lam, res, it, True, history
        if it >= max_iter:
            return S, lam, res, it, False, history
        it += 1
        G = gradient(table, B, mu, S)
        Fop = FOperator(S, table, mu, method=method)
        X1, X2 = Fop.solve(G), Fop.solve(I)
        d = -(X1 - (np.trace(X1).real / np.trace(X2).real) * X2)
        d = hermitize(d - np.trace(d) / N * I)
        slope = float(np.vdot(G, d).real)
        tiny = -slope <= 1e-13 * max(1.0, abs(J))
        # fraction to the boundary: the smallest eigenvalue may shrink at most tenfold per step
        Li = np.linalg.inv(np.linalg.cholesky(S))
        alpha = np.linalg.eigvalsh(hermitize(Li @ d @ Li.conj().T))[0]
        t = 1.0 if alpha >= 0 else min(1.0, 0.9 / -alpha)
        while True:
            trial = S + t * d
            try:
                Jt = objective(table, B, mu, trial)
            except PositivityError:
                Jt = np.inf
            if np.isfinite(Jt) and (tiny or Jt <= J + 1e-4 * t * slope):
                break
            t *= 0.5
            if t < 2.0**-60:
                log.warning("line search stalled at iteration %d (residual %.3g)", it, res)
                return S, lam, res, it, False, history
        S = hermitize(trial)
        S = S / np.trace(S).real
        J = objective(table, B, mu, S)
        history.append(J)


def solve_static(table: StructureTable, mv: MomentVector, mu: float, tol: float = 1e-10, max_iter: int = 100,
                 S0: Sdm | np.ndarray | None = None, method: str = "dense") -> StaticFitResult:
    """Minimize J over unit-trace positive definite matrices by damped Newton.

    Newton directions live in the trace-zero Hermitian subspace, so the
    multiplier is eliminated analytically.  Each step is capped so the
    smallest eigenvalue shrinks at most tenfold, then halved until J passes
    an Armijo test.  For ``mu`` below 0.1 the barrier is lowered from 0.1 by
    factors of ten with warm starts, since a cold start at small ``mu``
    creeps along the cone boundary.  ``max_iter`` applies per stage and
    ``iterations`` reports the total.  The dense solve of F_S is the default
    because the Woodbury route floors the residual near 1e-9 when S is badly
    conditioned.
    """
    if mu <= 0:
        raise ValueError("barrier parameter mu must be positive")
    N = table.N
    B = moments_to_B(table, mv)
    if S0 is None:
        S = np.eye(N, dtype=complex) / N
    else:
        S = np.array(S0.matrix if isinstance(S0, Sdm) else S0, dtype=complex)
        S = hermitize(S) / np.trace(S).real
    stages = []
    m = CONTINUATION_START
    while m > mu * 1.0001:
        stages.append(m)
        m /= 10
    total = 0
    for m in stages:
        S, _, _, it, _, _ = _newton(table, B, m, S, max(tol, 1e-6), max_iter, method)
        total += it
    S, lam, res, it, converged, history = _newton(table, B, mu, S, tol, max_iter, method)
    return StaticFitResult(Sdm(S, table.lam), lam, res, total + it, mu, converged, history)


def moments_from_grid(values: np.ndarray, table: StructureTable, indices: IndexSet | None = None) -> MomentVector:
    """Rectangle-rule moments ``int f phi_l dx`` of density values on the uniform torus mesh."""
    if table.family != FOURIER:
        raise ValueError("mesh moments are defined for the Fourier family")
    values = np.asarray(getattr(values, "values", values), dtype=float)
    n, M = values.ndim, values.shape[0]
    if n != table.n:
        raise ValueError(f"grid dimension {n} does not match basis dimension {table.n}")
    r = max(abs(v) for k in table.lam for v in k)
    if M <= 4 * r:
        raise ValueError(f"mesh too coarse: {M} points per axis, need more than {4 * r}")
    indices = indices or table.mho
    return MomentVector(torus.exp_moments(values, indices.array, n), indices)


def renyi_from_grid(values: np.ndarray) -> float:
    """``ln int f^2 / nu`` for a density tabulated on the torus mesh (constant weight)."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    n = values.ndim
    return float(np.log((2 * np.pi) ** n * torus.integrate(values**2)))


def hermite_quadrature(n: int, half_width: float = 12.0, points: int = 601) -> tuple[np.ndarray, np.ndarray]:
    """Uniform trapezoid nodes and weights on ``[-half_width, half_width]^n``."""
    x = np.linspace(-half_width, half_width, points)
    w = np.full(points, x[1] - x[0])
    w[[0, -1]] *= 0.5
    grids = np.meshgrid(*([x] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts, np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)


def target_from_function(f, table: StructureTable, M: int = 128) -> tuple[MomentVector, float]:
    """Moments and ``ln int f^2/nu`` of an analytic density ``f(points) -> values``."""
    if table.family == FOURIER:
        pts = torus.mesh_points(table.n, M)
        vals = np.asarray(f(pts), dtype=float).reshape((M,) * table.n)
        return moments_from_grid(vals, table), renyi_from_grid(vals)
    pts, w = hermite_quadrature(table.n)
    vals = np.asarray(f(pts), dtype=float)
    Psi = eval_basis_vector(table.family, table.mho, pts)
    mv = MomentVector((w * vals) @ Psi, table.mho)
    renyi = float(np.log(np.sum(w * vals**2 / weight(table.family, pts))))
    return mv, renyi


def project_effective(table: StructureTable, X: np.ndarray) -> np.ndarray:
    """Orthogonal projection of X onto span{E_l}; only this part of an SDM affects p_S."""
    coef = np.linalg.lstsq(table.gram(), coefficient_map(X, table), rcond=1e-12)[0]
    return np.tensordot(coef, table.matrices, axes=1)

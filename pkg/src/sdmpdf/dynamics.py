"""SDM evolution for the Smoluchowski diffusion on the torus.

The optimal SDM of a time-varying density f obeys

    dS/dt = F_S^-1(K) - Tr F_S^-1(K) / Tr F_S^-1(I) * F_S^-1(I),

with ``K = K(f) = sum_l E_f G(phi_l) E_l`` and G the generator.  Replacing f
by p_S gives the closed flow with ``K = Q(S)``.  Both right-hand sides are
trace free, so the flow stays on the unit-trace slice.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import torus
from .approx import MomentVector
from .basis import IndexSet, StructureTable, minkowski, write_complex_csv
from .errors import PositivityError
from .operators import FOperator, hermitize, vec
from .potential import Potential
from .sdm import coefficient_map

log = logging.getLogger(__name__)

POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """``entries[a, b] = <phi_{rows[a]}, G(phi_{cols[b]})>_H``."""

    entries: np.ndarray
    rows: IndexSet
    cols: IndexSet

    def square(self) -> np.ndarray:
        """The block with rows restricted to the column set."""
        if self.rows.indices == self.cols.indices:
            return self.entries
        pos = [self.rows.position(m) for m in self.cols]
        return self.entries[pos]


def extended_rows(mho: IndexSet, potential: Potential) -> IndexSet:
    """``mho + (supp V u {0})``: every frequency G(phi_l) can reach from l in mho."""
    supp = IndexSet.from_iterable("supp", [tuple(k) for k in potential.support] + [(0,) * potential.n])
    return minkowski(mho, supp, sign=1, kind="ext")


def generator_matrix(potential: Potential, sigma: float, mho: IndexSet, rows: IndexSet | None = None,
                     drift_sign: float = 1.0) -> GeneratorMatrix:
    """``g_{lm} = V_{l-m} (l-m).m - sigma^2/2 delta_{lm} |m|^2``.

    ``drift_sign`` multiplies the drift term; it exists so the check suite can
    confirm that a sign error is caught.
    """
    rows = rows or mho
    Lr, Lc = rows.array, mho.array
    D = Lr[:, None, :] - Lc[None, :, :]
    span = int(np.abs(D).max())
    n = potential.n
    table = np.zeros((2 * span + 1,) * n, dtype=complex)
    for k, c in potential.items():
        if max(abs(v) for v in k) <= span:
            table[tuple(v + span for v in k)] = c
    Vd = table[tuple(np.moveaxis(D + span, -1, 0))]
    g = drift_sign * Vd * np.einsum("abd,bd->ab", D, Lc)
    same = np.all(D == 0, axis=-1)
    g = g - 0.5 * sigma**2 * same * np.sum(Lc * Lc, axis=1)[None, :]
    return GeneratorMatrix(g, rows, mho)


def _check_cols(gen: GeneratorMatrix, table: StructureTable) -> None:
    if gen.cols.indices != table.mho.indices:
        raise ValueError("generator columns must be the structure table's mho")


def k_values(gen: GeneratorMatrix, mv: MomentVector) -> np.ndarray:
    """``E_f G(phi_l)`` for l in the generator columns, from moments on the generator rows."""
    return gen.entries.T @ mv.restrict(gen.rows)


def compute_K(gen: GeneratorMatrix, mv: MomentVector, table: StructureTable) -> np.ndarray:
    """``K(f) = sum_l E_f G(phi_l) E_l``.

    Exact when ``mv`` covers every row of ``gen`` that f has mass on; with
    ``rows = extended_rows(...)`` this holds for any f whose moments are known
    there.
    """
    _check_cols(gen, table)
    K = np.tensordot(k_values(gen, mv), table.matrices, axes=1)
    defect = float(np.max(np.abs(K - K.conj().T)))
    log.debug("K(f) Hermitian defect before symmetrization: %.3g", defect)
    return hermitize(K)


def generator_expectations(values: np.ndarray, potential: Potential, sigma: float, mho: IndexSet) -> np.ndarray:
    """Rectangle-rule ``int f G(phi_l) dx`` with G applied analytically to each phi_l."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    n, M = values.ndim, values.shape[0]
    L = mho.array
    out = -0.5 * sigma**2 * np.sum(L * L, axis=1) * torus.exp_moments(values, L, n)
    for d in range(n):
        dV = potential.on_mesh(M, derivative=d)
        out = out - 1j * L[:, d] * torus.exp_moments(values * dV, L, n)
    return out


def compute_Q(gen: GeneratorMatrix, table: StructureTable, S) -> np.ndarray:
    """``Q(S) = K(p_S) = sum_{l,m} g_{lm} <E_l, S> E_m``; linear in S."""
    _check_cols(gen, table)
    q = gen.square().T @ coefficient_map(S, table)
    return hermitize(np.tensordot(q, table.matrices, axes=1))


def qvec_matrix(gen: GeneratorMatrix, table: StructureTable) -> np.ndarray:
    """N^2 x N^2 matrix with ``vec(Q(S)) = matrix @ vec(S)`` (column-major vec)."""
    W = np.stack([vec(E) for E in table.matrices], axis=1)
    return W @ gen.square().T @ W.conj().T


def _rhs_from_operator(Fop: FOperator, K: np.ndarray) -> np.ndarray:
    N = K.shape[0]
    X1 = Fop.solve(K)
    X2 = Fop.solve(np.eye(N))
    rate = np.trace(X1).real / np.trace(X2).real
    return hermitize(X1 - rate * X2)


def rhs_exact(S, K_f: np.ndarray, table: StructureTable, mu: float, method: str = "lowrank") -> np.ndarray:
    """Exact-tracking right-hand side for a known ``K(f)``."""
    S = getattr(S, "matrix", S)
    return _rhs_from_operator(FOperator(S, table, mu, method=method), np.asarray(K_f, dtype=complex))


def multiplier_rate(S, K_f: np.ndarray, table: StructureTable, mu: float, method: str = "lowrank") -> float:
    """``d lambda/dt = -Tr F_S^-1(K) / Tr F_S^-1(I)``."""
    S = getattr(S, "matrix", S)
    Fop = FOperator(S, table, mu, method=method)
    return -np.trace(Fop.solve(K_f)).real / np.trace(Fop.solve(np.eye(table.N))).real


def rhs_closure(S, gen: GeneratorMatrix, table: StructureTable, mu: float, method: str = "lowrank") -> np.ndarray:
    """Closed right-hand side: K(f) replaced by Q(S)."""
    S = getattr(S, "matrix", S)
    return rhs_exact(S, compute_Q(gen, table, S), table, mu, method=method)


@dataclass
class SdmTrajectory:
    """Stored states (every ``store_every`` steps) plus per-step diagnostics."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    trace_dev: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)
    step_size: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "trace_dev", "min_eig", "step_size"])
            for row in zip(self.step_times, self.trace_dev, self.min_eig, self.step_size):
                w.writerow([repr(float(v)) for v in row])

    def write_snapshots(self, directory, family: str, r: int) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        n = None
        for i, (t, S) in enumerate(zip(self.times, self.states)):
            n = n or int(round(np.log(S.shape[0]) / np.log(2 * r + 1)))
            write_complex_csv(directory / f"sdm_{i:05d}.csv", S,
                              header=f"# sdm n={n} r={r} family={family} t={t!r}")


def _rk4(f, t, S, h):
    k1 = f(t, S)
    k2 = f(t + h / 2, S + h / 2 * k1)
    k3 = f(t + h / 2, S + h / 2 * k2)
    k4 = f(t + h, S + h * k3)
    return S + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(S0, gen: GeneratorMatrix | None, table: StructureTable, mu: float, t_final: float, dt: float,
              mode: str = "closure", forcing: Callable[[float], np.ndarray] | None = None,
              store_every: int = 1, method: str = "lowrank", max_halvings: int = 10,
              on_step: Callable[[float, np.ndarray], None] | None = None) -> SdmTrajectory:
    """Classical RK4 on the SDM with Hermitization and trace renormalization after each step.

    ``mode="closure"`` uses Q(S); ``mode="exact"`` uses ``forcing(t) = K(f(t))``.
    A step whose stages leave the positive definite cone is redone on halved
    sub-steps, down to ``dt / 2**max_halvings``.  A stored state with smallest
    eigenvalue below 1e-12 raises :class:`PositivityError`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if mode == "closure":
        if gen is None:
            raise ValueError("closure mode needs a generator matrix")
        _check_cols(gen, table)
        gsq_T = gen.square().T

        def rhs(t, S):
            q = gsq_T @ coefficient_map(S, table)
            Q = hermitize(np.tensordot(q, table.matrices, axes=1))
            return _rhs_from_operator(FOperator(S, table, mu, method=method), Q)
    elif mode == "exact":
        if forcing is None:
            raise ValueError("exact mode needs a forcing callable t -> K(f(t))")

        def rhs(t, S):
            return _rhs_from_operator(FOperator(S, table, mu, method=method), forcing(t))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    S = hermitize(np.array(getattr(S0, "matrix", S0), dtype=complex))
    ev0 = np.linalg.eigvalsh(S)[0]
    if ev0 <= 0 or abs(np.trace(S).real - 1) > 1e-9:
        raise ValueError("initial SDM must be positive definite with unit trace")
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be a multiple of dt")
    traj = SdmTrajectory(times=[0.0], states=[S.copy()])
    smallest = [dt]

    def finish(Snew, t):
        Snew = hermitize(Snew)
        drift = abs(np.trace(Snew).real - 1)
        Snew = Snew / np.trace(Snew).real
        return Snew, drift

    def advance(S, t, h, depth):
        try:
            return finish(_rk4(rhs, t, S, h), t + h)
        except PositivityError:
            if depth >= max_halvings:
                raise
        smallest[0] = min(smallest[0], h / 2)
        S1, d1 = advance(S, t, h / 2, depth + 1)
        S2, d2 = advance(S1, t + h / 2, h / 2, depth + 1)
        return S2, max(d1, d2)

    for i in range(1, steps + 1):
        t0 = (i - 1) * dt
        smallest[0] = dt
        try:
            S, drift = advance(S, t0, dt, 0)
        except PositivityError as exc:
            raise PositivityError(f"positivity lost in step starting at t={t0:.6g}", t=t0, state=S) from exc
        t = i * dt
        lmin = float(np.linalg.eigvalsh(S)[0])
        traj.step_times.append(t)
        traj.trace_dev.append(drift)
        traj.min_eig.append(lmin)
        traj.step_size.append(smallest[0])
        if lmin < POSITIVITY_FLOOR:
            raise PositivityError(f"smallest eigenvalue {lmin:.3g} at t={t:.6g}", t=t, state=S)
        if on_step is not None:
            on_step(t, S)
        if i % store_every == 0 or i == steps:
            traj.times.append(t)
            traj.states.append(S.copy())
    return traj

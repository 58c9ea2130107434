"""Self-contained property suite behind ``sdmpdf check``."""

from __future__ import annotations

import itertools

import numpy as np

from . import torus
from .approx import moments_from_grid
from .basis import (FOURIER, HERMITE, IndexSet, build_index_set, eval_basis_vector, structure_coefficient,
                    structure_table)
from .dynamics import compute_K, extended_rows, generator_matrix, integrate
from .fpke_ref import (DensityGrid, FourierDensity, energy_bound_check, fd_evolve, galerkin_evolve,
                       gibbs_invariant, renyi_monotonicity)
from .potential import sample_potential
from .sdm import Sdm, coefficient_map, random_sdm


def _entry(name: str, measured: float, tolerance: float, passed: bool | None = None, **info) -> dict:
    ok = measured <= tolerance if passed is None else passed
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance), "passed": bool(ok), **info}


def hermite_gauss(n: int, points: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule for the standard normal weight."""
    x, w = np.polynomial.hermite_e.hermegauss(points)
    w = w / np.sqrt(2 * np.pi)
    pts = np.array(list(itertools.product(x, repeat=n)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
    return pts, wts


def check_orthonormality() -> list[dict]:
    lam, _ = build_index_set(FOURIER, 2, 2)
    M = 16
    Phi = eval_basis_vector(FOURIER, lam, torus.mesh_points(2, M))
    G = Phi.conj().T @ Phi / M**2
    out = [_entry("fourier_orthonormality", np.max(np.abs(G - np.eye(len(lam)))), 1e-12)]
    lam, _ = build_index_set(HERMITE, 2, 4)
    pts, w = hermite_gauss(2)
    Phi = eval_basis_vector(HERMITE, lam, pts)
    G = (Phi.conj().T * w) @ Phi
    out.append(_entry("hermite_orthonormality", np.max(np.abs(G - np.eye(len(lam)))), 1e-10))
    return out


def structure_oracle_error(family: str, n: int, kmax: int = 4) -> float:
    """Largest gap between closed-form structure coefficients and quadrature of phi_j conj(phi_k) conj(phi_l)."""
    idx = list(itertools.product(range(-kmax, kmax + 1) if family == FOURIER else range(kmax + 1), repeat=n))
    if family == FOURIER:
        M = 8 * kmax + 4
        pts, w = torus.mesh_points(n, M), np.full(M**n, 1.0 / M**n)
    else:
        pts, w = hermite_gauss(n)
    Phi = eval_basis_vector(family, IndexSet("all", tuple(idx)), pts)
    quad = np.einsum("p,pj,pk,pl->jkl", w, Phi, Phi.conj(), Phi.conj())
    worst = 0.0
    for a, j in enumerate(idx):
        for b, k in enumerate(idx):
            for c, l in enumerate(idx):
                worst = max(worst, abs(structure_coefficient(family, j, k, l) - quad[a, b, c]))
    return worst


def check_structure() -> list[dict]:
    out = []
    for family in (FOURIER, HERMITE):
        for n in (1, 2):
            out.append(_entry(f"{family}_structure_n{n}", structure_oracle_error(family, n), 1e-10))
    return out


def check_moments(count: int = 5) -> dict:
    table = structure_table(FOURIER, 2, 2)
    rng = np.random.default_rng(7)
    worst = 0.0
    M = 32
    for _ in range(count):
        S = random_sdm(table.lam, rng)
        Phi = eval_basis_vector(FOURIER, table.lam, torus.mesh_points(2, M))
        p = np.einsum("pj,jk,pk->p", Phi.conj(), S.matrix, Phi).real / (2 * np.pi) ** 2
        mv = moments_from_grid(p.reshape(M, M), table)
        worst = max(worst, np.max(np.abs(mv.values - coefficient_map(S, table))))
    return _entry("moment_consistency", worst, 1e-10)


def check_sdm_legitimacy(drift_sign: float = 1.0) -> list[dict]:
    table = structure_table(FOURIER, 2, 2)
    V = sample_potential(2, 3, seed=11, amplitude_mean=0.05)
    gen = generator_matrix(V, 1.0, table.mho, drift_sign=drift_sign)
    traj = integrate(Sdm.uniform(table.lam), gen, table, 0.01, 0.2, 0.002)
    dev = max(abs(np.trace(S).real - 1) for S in traj.states)
    return [_entry("trace_conservation", dev, 1e-9),
            _entry("positivity", min(traj.min_eig), 0.0, passed=min(traj.min_eig) > 0)]


def check_equilibrium(drift_sign: float = 1.0, M: int = 256) -> dict:
    """``K(f_*) = 0`` for the Gibbs density of a seeded potential."""
    table = structure_table(FOURIER, 2, 2)
    V = sample_potential(2, 5, seed=0)
    rows = extended_rows(table.mho, V)
    gen = generator_matrix(V, 1.0, table.mho, rows=rows, drift_sign=drift_sign)
    mv = moments_from_grid(gibbs_invariant(V, 2.0, M), table, indices=rows)
    return _entry("equilibrium_K_zero", np.linalg.norm(compute_K(gen, mv, table)), 1e-8)


def check_fd_diagnostics() -> list[dict]:
    V = sample_potential(2, 3, seed=5, amplitude_mean=0.05)
    f_star = gibbs_invariant(V, 2.0, 100)
    dt, steps = 0.002, 250
    traj = fd_evolve(DensityGrid.uniform(2, 100), V, 1.0, dt, steps, store_every=steps, reference=f_star)
    rep = energy_bound_check(traj, V, 1.0)
    rises = renyi_monotonicity(traj.renyi)
    mass = max(abs(m - traj.mass[0]) for m in traj.mass) / (steps * dt)
    return [_entry("energy_bound", max(rep.worst_relative_margin, 0.0), rep.rel_slack, passed=rep.passed),
            _entry("entropy_monotonicity", max((d for _, d in rises), default=0.0), 1e-6, passed=not rises),
            _entry("mass_conservation", mass, 1e-10)]


def cross_solver_error(t_checks=(0.5,), seed: int = 3, M: int = 100, J: int = 8, dt: float = 0.002) -> dict:
    """Relative L2 gap between Galerkin and finite differences for an R=2 potential at the given times."""
    V = sample_potential(2, 2, seed=seed)
    steps = [int(round(t / dt)) for t in t_checks]
    gal = galerkin_evolve(FourierDensity.uniform(2, J), V, 1.0, dt, max(steps), store_at=steps)
    out = {}
    grids = {}

    def keep(grid):
        i = int(round(grid.t / dt))
        if i in steps:
            grids[i] = grid.values.copy()

    fd_evolve(DensityGrid.uniform(2, M), V, 1.0, dt, max(steps), store_every=max(steps), on_step=keep)
    for t, i, state in zip(t_checks, steps, gal.states):
        g = state.to_mesh(M).values
        out[t] = float(np.sqrt(np.sum((g - grids[i]) ** 2) / np.sum(grids[i] ** 2)))
    return out


def check_cross_solver() -> dict:
    errs = cross_solver_error()
    return _entry("cross_solver", max(errs.values()), 1e-2, per_time={str(k): v for k, v in errs.items()})


def run_checks(drift_sign: float = 1.0) -> list[dict]:
    checks = check_orthonormality() + check_structure() + [check_moments()]
    checks += check_sdm_legitimacy(drift_sign) + [check_equilibrium(drift_sign)]
    checks += check_fd_diagnostics() + [check_cross_solver()]
    return checks


def cmd_check(mutations: bool = False) -> dict:
    """Run the suite; with ``mutations`` also rerun the generator checks with the drift sign flipped."""
    checks = run_checks()
    report = {"passed": all(c["passed"] for c in checks), "checks": checks}
    if mutations:
        mutated = check_sdm_legitimacy(-1.0) + [check_equilibrium(-1.0)]
        failed = [c["name"] for c in mutated if not c["passed"]]
        report["mutations"] = [{"name": "drift_sign_flip", "caught": bool(failed), "failed_checks": failed,
                                "checks": mutated}]
    return report

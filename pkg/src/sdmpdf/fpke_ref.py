"""Reference solutions of the Smoluchowski FPKE ``f_t = div(f grad V) + sigma^2/2 Laplace f`` on the torus.

Two independent solvers are provided: a conservative finite-difference scheme
on the uniform mesh and a spectral Galerkin truncation of the Fourier-domain
ODEs.  Both are advanced with classical RK4.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import torus
from .errors import NegativeDensityError, StabilityError
from .potential import Potential

log = logging.getLogger(__name__)

NEGATIVITY_TOL = 1e-8
STABILITY_SAFETY = 1.1
# Extent of the RK4 stability region along the negative real and the imaginary axis.
RK4_REAL = 2.785
RK4_IMAG = 2.828


@dataclass
class DensityGrid:
    """Density values on the mesh ``x_i = 2 pi i / M`` of the n-torus."""

    n: int
    M: int
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.M,) * self.n:
            raise ValueError(f"values have shape {self.values.shape}, expected {(self.M,) * self.n}")

    @classmethod
    def uniform(cls, n: int, M: int) -> "DensityGrid":
        return cls(n, M, np.full((M,) * n, (2 * np.pi) ** (-n)))

    @property
    def mass(self) -> float:
        return torus.integrate(self.values)

    @property
    def minimum(self) -> float:
        return float(self.values.min())

    @property
    def norm2_H(self) -> float:
        """``||f||_H^2 = (2 pi)^-n int f^2``."""
        return (2 * np.pi) ** (-self.n) * torus.integrate(self.values**2)

    def l2_distance(self, other) -> float:
        other = np.asarray(getattr(other, "values", other), dtype=float)
        return float(np.sqrt(torus.integrate((self.values - other) ** 2)))

    def l2_norm(self) -> float:
        return float(np.sqrt(torus.integrate(self.values**2)))

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        """Read a grid written by :meth:`to_csv` (or any x1..xn,f table on the uniform mesh)."""
        t = 0.0
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if ln.strip()]
        for ln in lines:
            if ln.startswith("#"):
                for tok in ln[1:].split():
                    if tok.startswith("t="):
                        t = float(tok[2:])
        rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
        n = len(rows[0]) - 1
        data = np.array(rows[1:], dtype=float)
        M = int(round(len(data) ** (1.0 / n)))
        if M**n != len(data):
            raise ValueError(f"{len(data)} rows do not form an M^{n} mesh")
        return cls(n, M, data[:, -1].reshape((M,) * n), t)

    def to_csv(self, path, sigma: float | None = None, seed: int | None = None) -> None:
        """Columns x1..xn, f; values are clamped at 0 for output, the raw minimum goes in the header."""
        pts = torus.mesh_points(self.n, self.M)
        with open(path, "w", newline="") as fh:
            fh.write(f"# M={self.M} t={self.t!r} sigma={sigma} seed={seed} raw_min={self.minimum!r}\n")
            w = csv.writer(fh)
            w.writerow([f"x{d + 1}" for d in range(self.n)] + ["f"])
            for p, v in zip(pts, np.maximum(self.values, 0.0).ravel()):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


@dataclass
class FourierDensity:
    """Coefficients ``f_k`` for ``|k|_inf <= J`` stored as a (2J+1)^n array centred at k = 0."""

    J: int
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (2 * self.J + 1,) * self.n:
            raise ValueError("coefficient array does not match the truncation")

    @classmethod
    def uniform(cls, n: int, J: int) -> "FourierDensity":
        c = np.zeros((2 * J + 1,) * n, dtype=complex)
        c[(J,) * n] = (2 * np.pi) ** (-n)
        return cls(J, n, c)

    @property
    def indices(self) -> np.ndarray:
        ax = np.arange(-self.J, self.J + 1)
        grids = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def coefficient(self, k) -> complex:
        if max(abs(v) for v in k) > self.J:
            return 0j
        return complex(self.coeffs[tuple(v + self.J for v in k)])

    @classmethod
    def from_grid(cls, grid: DensityGrid, J: int) -> "FourierDensity":
        """``f_k = (2 pi)^-n int f exp(-i k.x)`` by the rectangle rule."""
        if grid.M <= 2 * J:
            raise ValueError("mesh too coarse for the requested truncation")
        out = cls(J, grid.n, np.zeros((2 * J + 1,) * grid.n, dtype=complex))
        K = out.indices
        vals = torus.exp_moments(grid.values, -K, grid.n) * (2 * np.pi) ** (-grid.n)
        out.coeffs = vals.reshape(out.coeffs.shape)
        return out

    def to_mesh(self, M: int, t: float = 0.0) -> DensityGrid:
        vals = torus.synthesize(self.coeffs.ravel(), self.indices, self.n, M)
        if np.max(np.abs(vals.imag)) > 1e-10 * max(1.0, np.max(np.abs(vals.real))):
            raise ArithmeticError("Fourier density is not real; conjugate symmetry broken")
        return DensityGrid(self.n, M, vals.real, t)


def gibbs_invariant(potential: Potential, beta: float, M: int) -> DensityGrid:
    """``f_* = exp(-beta V) / Z`` with Z from the rectangle rule on the same mesh."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    V = potential.on_mesh(M)
    w = np.exp(-beta * (V - V.min()))
    return DensityGrid(potential.n, M, w / torus.integrate(w))


def fd_time_step_limits(potential: Potential, sigma: float, M: int,
                        safety: float = STABILITY_SAFETY) -> tuple[float, float]:
    """Largest stable RK4 steps for the diffusion and the advection parts of the mesh operator.

    Diffusion: the discrete Laplacian has spectral radius ``4n/h^2``, so the
    real eigenvalues reach ``-2 n sigma^2 / h^2``.  Advection: central fluxes
    give nearly imaginary eigenvalues bounded by ``sum_d max|d_d V| / h``.
    """
    n, h = potential.n, 2 * np.pi / M
    diff = RK4_REAL * h**2 / (2 * n * sigma**2 * safety)
    speed = sum(float(np.max(np.abs(potential.on_mesh(M, derivative=d)))) for d in range(n))
    adv = np.inf if speed == 0 else RK4_IMAG * h / (speed * safety)
    return diff, adv


class FdOperator:
    """Conservative central-flux discretization with exact midpoint gradients of V."""

    def __init__(self, potential: Potential, sigma: float, M: int):
        n, h = potential.n, 2 * np.pi / M
        self.n, self.M, self.h, self.D = n, M, h, 0.5 * sigma**2
        self.grad_mid = []
        for d in range(n):
            shift = np.zeros(n)
            shift[d] = h / 2
            self.grad_mid.append(potential.on_mesh(M, derivative=d, shift=shift))

    def __call__(self, f: np.ndarray) -> np.ndarray:
        out = np.zeros_like(f)
        for d, g in enumerate(self.grad_mid):
            fp = np.roll(f, -1, axis=d)
            flux = 0.5 * (f + fp) * g + self.D * (fp - f) / self.h
            out += (flux - np.roll(flux, 1, axis=d)) / self.h
        return out


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + h / 2 * k1)
    k3 = rhs(y + h / 2 * k2)
    k4 = rhs(y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class FdTrajectory:
    """Per-step scalars for every step and full grids every ``store_every`` steps."""

    dt: float
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    minimum: list = field(default_factory=list)
    norm2_H: list = field(default_factory=list)
    renyi: list = field(default_factory=list)
    grids: list = field(default_factory=list)

    @property
    def final(self) -> DensityGrid:
        return self.grids[-1]

    def _record(self, grid: DensityGrid, reference: DensityGrid | None) -> None:
        self.times.append(grid.t)
        self.mass.append(grid.mass)
        self.minimum.append(grid.minimum)
        self.norm2_H.append(grid.norm2_H)
        if reference is not None:
            self.renyi.append(renyi_relative(grid, reference))


def fd_evolve(f0: DensityGrid, potential: Potential, sigma: float, dt: float, steps: int,
              store_every: int = 1, reference: DensityGrid | None = None,
              on_step: Callable[[DensityGrid], None] | None = None,
              on_negative: str = "raise") -> FdTrajectory:
    """Advance ``f0`` by ``steps`` RK4 steps of the finite-difference operator.

    ``reference`` (typically f_*) adds ``R(f || reference)`` to the per-step
    record.  ``on_negative="raise"`` aborts when a value drops below -1e-8;
    ``"record"`` only logs it and keeps going.
    """
    if on_negative not in ("raise", "record"):
        raise ValueError("on_negative must be 'raise' or 'record'")
    if potential.n != f0.n:
        raise ValueError("potential and density dimensions differ")
    if sigma <= 0 or dt <= 0:
        raise ValueError("sigma and dt must be positive")
    if f0.M < 4 * potential.cutoff:
        raise ValueError(f"mesh with M={f0.M} does not resolve a potential of cutoff {potential.cutoff}")
    diff, adv = fd_time_step_limits(potential, sigma, f0.M)
    if dt > min(diff, adv):
        raise StabilityError(f"dt={dt} exceeds the RK4 stability limits (diffusion {diff:.4g}, advection {adv:.4g})")
    op = FdOperator(potential, sigma, f0.M)
    traj = FdTrajectory(dt)
    f = f0.values.copy()
    grid = DensityGrid(f0.n, f0.M, f, f0.t)
    traj._record(grid, reference)
    traj.grids.append(grid)
    warned = False
    for i in range(1, steps + 1):
        f = _rk4(op, f, dt)
        grid = DensityGrid(f0.n, f0.M, f, f0.t + i * dt)
        traj._record(grid, reference)
        if grid.minimum < -NEGATIVITY_TOL:
            if on_negative == "raise":
                raise NegativeDensityError(f"density reached {grid.minimum:.3g} at t={grid.t:.6g}",
                                           t=grid.t, minimum=grid.minimum)
            if not warned:
                log.warning("density reached %.3g at t=%.6g", grid.minimum, grid.t)
                warned = True
        if on_step is not None:
            on_step(grid)
        if i % store_every == 0 or i == steps:
            traj.grids.append(grid)
    return traj


def galerkin_rhs(fd: FourierDensity, potential: Potential, sigma: float) -> np.ndarray:
    """``d f_j/dt = -sum_k (j.k) V_k f_{j-k} - sigma^2/2 |j|^2 f_j``, with f zero beyond the truncation."""
    J, n = fd.J, fd.n
    if J < potential.cutoff:
        raise ValueError(f"truncation J={J} is below the potential cutoff {potential.cutoff}")
    jj = fd.indices.reshape(fd.coeffs.shape + (n,))
    j2 = np.sum(jj * jj, axis=-1)
    out = -0.5 * sigma**2 * j2 * fd.coeffs
    size = 2 * J + 1
    for k, v in zip(potential.support, potential.values):
        if not np.any(k):
            continue
        # shifted[j] = f_{j-k}, zero where j-k leaves the truncation
        shifted = np.zeros_like(fd.coeffs)
        dst, src = [], []
        for kd in k:
            if kd >= 0:
                dst.append(slice(kd, size))
                src.append(slice(0, size - kd))
            else:
                dst.append(slice(0, size + kd))
                src.append(slice(-kd, size))
        shifted[tuple(dst)] = fd.coeffs[tuple(src)]
        out -= v * (jj @ k) * shifted
    out[(J,) * n] = 0.0
    return out


@dataclass
class GalerkinTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)


def galerkin_evolve(fd0: FourierDensity, potential: Potential, sigma: float, dt: float, steps: int,
                    store_at: list[int] | None = None) -> GalerkinTrajectory:
    """RK4 on the truncated coefficient ODEs; stores the states after the listed step counts."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    store = set(store_at if store_at is not None else range(steps + 1))
    traj = GalerkinTrajectory()
    c = fd0.coeffs.copy()

    def rhs(y):
        return galerkin_rhs(FourierDensity(fd0.J, fd0.n, y), potential, sigma)

    if 0 in store:
        traj.times.append(0.0)
        traj.states.append(FourierDensity(fd0.J, fd0.n, c.copy()))
    for i in range(1, steps + 1):
        c = _rk4(rhs, c, dt)
        if i in store:
            traj.times.append(i * dt)
            traj.states.append(FourierDensity(fd0.J, fd0.n, c.copy()))
    return traj


@dataclass
class EnergyBoundReport:
    """``margin = d/dt ||f||_H^2 - bound``; positive margins beyond the slack are violations."""

    laplacian_sup: float
    margins: np.ndarray
    scales: np.ndarray
    violations: list
    rel_slack: float

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def worst_relative_margin(self) -> float:
        return float(np.max(self.margins / self.scales))


def energy_bound_check(traj: FdTrajectory, potential: Potential, sigma: float, rel_slack: float = 1e-3,
                       M_sup: int = 200) -> EnergyBoundReport:
    """Compare the forward-difference rate of ``||f||_H^2`` with the dissipation bound

        d/dt ||f||_H^2 <= (||Laplace V||_inf - sigma^2) ||f||_H^2 + (2 pi)^-2n sigma^2,

    the bound being taken at the midpoint of each step.
    """
    n = potential.n
    lap = potential.laplacian_sup(M_sup)
    E = np.asarray(traj.norm2_H)
    rate = np.diff(E) / traj.dt
    Emid = 0.5 * (E[1:] + E[:-1])
    const = (2 * np.pi) ** (-2 * n) * sigma**2
    bound = (lap - sigma**2) * Emid + const
    scales = np.abs(lap - sigma**2) * Emid + const
    margins = rate - bound
    bad = [(float(traj.times[i + 1]), float(margins[i])) for i in np.flatnonzero(margins > rel_slack * scales)]
    return EnergyBoundReport(lap, margins, scales, bad, rel_slack)


def renyi_relative(f, g) -> float:
    """``ln int f^2 / g`` by the rectangle rule."""
    fv = np.asarray(getattr(f, "values", f), dtype=float)
    gv = np.asarray(getattr(g, "values", g), dtype=float)
    if gv.min() < 1e-300:
        raise ValueError("reference density must be positive on the mesh")
    return float(np.log(torus.integrate(fv**2 / gv)))


def renyi_monotonicity(values, slack: float = 1e-6) -> list[tuple[int, float]]:
    """Steps where ``R(f || f_*)`` increased by more than ``slack``."""
    d = np.diff(np.asarray(values))
    return [(int(i + 1), float(d[i])) for i in np.flatnonzero(d > slack)]

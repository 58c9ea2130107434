"""Seeded end-to-end run: FPKE reference against the closed SDM flow on the 2-torus."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, torus
from .basis import FOURIER, structure_table
from .dynamics import SdmTrajectory, generator_matrix, integrate
from .errors import SdmError
from .fpke_ref import DensityGrid, FdTrajectory, fd_evolve, gibbs_invariant
from .potential import DEFAULT_AMPLITUDE_MEAN, Potential, sample_potential
from .sdm import Sdm, pdf_on_mesh

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    n: int = 2
    r: int = 2
    R: int = 5
    seed: int = 0
    amplitude_mean: float = DEFAULT_AMPLITUDE_MEAN
    sigma: float = 1.0
    mu: float = 0.01
    t_final: float = 4.0
    dt: float = 0.002
    M: int = 100
    J: int = 8
    out: str | None = None
    stride: int = 0
    error_stride: int = 1
    on_negative: str = "raise"

    def __post_init__(self):
        if self.sigma <= 0 or self.mu <= 0 or self.dt <= 0:
            raise ValueError("sigma, mu and dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.M < max(4 * self.R, 4 * self.r) + 2:
            raise ValueError(f"M={self.M} is below max(4R, 4r) + 2 = {max(4 * self.R, 4 * self.r) + 2}")
        if self.error_stride < 1 or self.stride < 0:
            raise ValueError("strides must be nonnegative (error_stride >= 1)")
        if self.on_negative not in ("raise", "record"):
            raise ValueError("on_negative must be 'raise' or 'record'")

    @property
    def steps(self) -> int:
        steps = int(round(self.t_final / self.dt))
        if abs(steps * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ValueError("t_final must be a multiple of dt")
        return steps

    @classmethod
    def from_dict(cls, data: dict) -> tuple["ExperimentConfig", list[str]]:
        """Config plus the names of fields that fell back to defaults."""
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data), sorted(names - set(data))

    @classmethod
    def from_json(cls, path) -> tuple["ExperimentConfig", list[str]]:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    potential: Potential
    times: np.ndarray
    rel_error: np.ndarray
    trace_dev: np.ndarray
    min_eig: np.ndarray
    sdm: SdmTrajectory
    fd: FdTrajectory
    f_final: DensityGrid
    p_final: np.ndarray
    f_star: DensityGrid
    timings: dict

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_error))

    def distance_to_invariant(self) -> tuple[float, float]:
        """Relative L2 distances ``|p_S - f_*| / |f_*|`` and ``|f - f_*| / |f_*|`` at the final time."""
        ref = self.f_star.l2_norm()
        return (self.f_star.l2_distance(self.p_final) / ref, self.f_star.l2_distance(self.f_final) / ref)

    def summary(self) -> dict:
        dp, df = self.distance_to_invariant()
        return {"max_rel_error": self.max_rel_error, "final_rel_error": float(self.rel_error[-1]),
                "pS_to_fstar": dp, "f_to_fstar": df, "max_trace_dev": float(np.max(self.trace_dev)),
                "min_eig": float(np.min(self.min_eig)), "fd_min": float(np.min(self.fd.minimum)),
                "fd_mass_drift": float(np.max(np.abs(np.asarray(self.fd.mass) - self.fd.mass[0])))}


def relative_error(f: np.ndarray, p: np.ndarray) -> float:
    """``D(f, p) / D(f, 0)`` with the constant torus weight; the 1/2 cancels."""
    return float(np.sum((f - p) ** 2) / np.sum(f**2))


def run_experiment(config: ExperimentConfig, potential: Potential | None = None) -> ExperimentResult:
    """Evolve f from the uniform density and S from ``I/N`` side by side and record the relative error."""
    cfg = config
    timings = {}
    tic = time.perf_counter()
    V = potential or sample_potential(cfg.n, cfg.R, cfg.seed, cfg.amplitude_mean)
    table = structure_table(FOURIER, cfg.n, cfg.r)
    gen = generator_matrix(V, cfg.sigma, table.mho)
    f_star = gibbs_invariant(V, 2.0 / cfg.sigma**2, cfg.M)
    timings["setup"] = time.perf_counter() - tic
    steps = cfg.steps

    tic = time.perf_counter()
    S0 = Sdm.uniform(table.lam)
    if steps:
        sdm_traj = integrate(S0, gen, table, cfg.mu, cfg.t_final, cfg.dt, store_every=1)
    else:
        sdm_traj = SdmTrajectory(times=[0.0], states=[S0.matrix.copy()])
    timings["sdm"] = time.perf_counter() - tic

    sample = [0] if steps == 0 else list(range(cfg.error_stride, steps + 1, cfg.error_stride))
    if steps and sample[-1] != steps:
        sample.append(steps)
    wanted = set(sample)
    errors = {}

    def record(grid: DensityGrid) -> None:
        i = int(round(grid.t / cfg.dt))
        if i in errors or i not in wanted:
            return
        errors[i] = relative_error(grid.values, pdf_on_mesh(sdm_traj.states[i], table, cfg.M))

    tic = time.perf_counter()
    f0 = DensityGrid.uniform(cfg.n, cfg.M)
    record(f0)
    fd = fd_evolve(f0, V, cfg.sigma, cfg.dt, steps, store_every=max(steps, 1), reference=f_star,
                   on_step=record, on_negative=cfg.on_negative)
    timings["fd"] = time.perf_counter() - tic

    idx = np.array(sample)
    times = idx * cfg.dt
    trace_dev = np.array([0.0] + sdm_traj.trace_dev)[idx]
    min_eig = np.array([np.linalg.eigvalsh(S0.matrix)[0]] + sdm_traj.min_eig)[idx]
    p_final = pdf_on_mesh(sdm_traj.final, table, cfg.M)
    return ExperimentResult(cfg, V, times, np.array([errors[i] for i in sample]), trace_dev, min_eig,
                            sdm_traj, fd, fd.final, p_final, f_star, timings)


def write_outputs(result: ExperimentResult, out, defaults_filled: list[str] | None = None) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    with open(out / "error.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "rel_error", "trace_dev", "min_eig"])
        for row in zip(result.times, result.rel_error, result.trace_dev, result.min_eig):
            w.writerow([repr(float(v)) for v in row])
    pts = torus.mesh_points(cfg.n, cfg.M)
    with open(out / "pdf_final.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{d + 1}" for d in range(cfg.n)] + ["f", "p_sdm", "f_star"])
        cols = np.column_stack([pts, result.f_final.values.ravel(), result.p_final.ravel(),
                                result.f_star.values.ravel()])
        for row in cols:
            w.writerow([repr(float(v)) for v in row])
    result.potential.save(out)
    result.sdm.to_csv(out / "trajectory.csv")
    if cfg.stride:
        keep = SdmTrajectory(times=result.sdm.times[::cfg.stride], states=result.sdm.states[::cfg.stride])
        keep.write_snapshots(out / "snapshots", FOURIER, cfg.r)
    write_meta(out, cfg, defaults_filled or [], status="ok", timings=result.timings, summary=result.summary())
    return out


def write_meta(out, cfg: ExperimentConfig, defaults_filled: list[str], status: str, **extra) -> None:
    meta = {"config": asdict(cfg), "defaults_filled": defaults_filled, "version": __version__,
            "status": status, **extra}
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "meta.json").write_text(json.dumps(meta, indent=2, default=float))


def cmd_experiment(config: ExperimentConfig, out=None, defaults_filled: list[str] | None = None) -> ExperimentResult:
    """Run and write the output bundle; a failure is recorded in meta.json before re-raising."""
    out = out or config.out
    if out is None:
        raise ValueError("an output directory is required")
    tic = time.perf_counter()
    try:
        result = run_experiment(config)
    except SdmError as exc:
        failure = {"type": type(exc).__name__, "message": str(exc), "t": getattr(exc, "t", None)}
        write_meta(out, config, defaults_filled or [], status="failed", failure=failure,
                   timings={"total": time.perf_counter() - tic})
        raise
    result.timings["total"] = time.perf_counter() - tic
    write_outputs(result, out, defaults_filled)
    return result

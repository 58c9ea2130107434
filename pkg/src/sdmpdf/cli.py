"""Command line entry point: ``sdmpdf experiment | fit | check``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import torus
from .approx import moments_from_grid, proximity, renyi_from_grid, solve_static, target_from_function
from .basis import FOURIER, HERMITE, structure_table
from .checks import cmd_check
from .errors import SdmError
from .experiment import ExperimentConfig, cmd_experiment
from .fpke_ref import DensityGrid, gibbs_invariant
from .potential import DEFAULT_AMPLITUDE_MEAN, sample_potential
from .sdm import eval_pdf, pdf_on_mesh, save_sdm

PRESETS = {
    FOURIER: ("uniform", "von_mises", "gibbs"),
    HERMITE: ("normal", "bimodal"),
}


def _von_mises(x, kappa: float = 1.0, center: float = np.pi):
    from scipy.special import i0

    x = np.atleast_2d(x)
    return np.prod(np.exp(kappa * np.cos(x - center)) / (2 * np.pi * i0(kappa)), axis=1)


def _bimodal(x, shift: float = 1.0):
    x = np.atleast_2d(x)
    n = x.shape[1]
    g = lambda c: np.exp(-0.5 * np.sum((x - c) ** 2, axis=1)) / (2 * np.pi) ** (n / 2)
    return 0.5 * (g(shift) + g(-shift))


def _normal(x):
    x = np.atleast_2d(x)
    return np.exp(-0.5 * np.sum(x * x, axis=1)) / (2 * np.pi) ** (x.shape[1] / 2)


def fit_target(target: str, table, M: int = 128, seed: int = 0, R: int = 5,
               amplitude_mean: float = DEFAULT_AMPLITUDE_MEAN, sigma: float = 1.0):
    """Moments and log quadratic norm for a preset name or ``grid:<csv>``."""
    n = table.n
    if target.startswith("grid:"):
        if table.family != FOURIER:
            raise ValueError("grid targets live on the torus")
        grid = DensityGrid.from_csv(target[5:])
        return moments_from_grid(grid, table), renyi_from_grid(grid)
    if target not in PRESETS[table.family]:
        raise ValueError(f"unknown target {target!r} for the {table.family} basis; choose from "
                         f"{PRESETS[table.family]} or grid:<file>")
    if target == "gibbs":
        V = sample_potential(n, R, seed, amplitude_mean)
        grid = gibbs_invariant(V, 2.0 / sigma**2, M)
        return moments_from_grid(grid, table), renyi_from_grid(grid)
    f = {"uniform": lambda x: np.full(len(np.atleast_2d(x)), (2 * np.pi) ** (-n)), "von_mises": _von_mises,
         "normal": _normal, "bimodal": _bimodal}[target]
    return target_from_function(f, table, M)


def cmd_fit(target: str, family: str, n: int, r: int, mu: float, out, M: int = 128, **target_kw) -> dict:
    """Fit an SDM to the target and write sdm.csv, fit_report.json and pdf_grid.csv."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = structure_table(family, n, r)
    mv, renyi_f = fit_target(target, table, M=M, **target_kw)
    res = solve_static(table, mv, mu)
    save_sdm(out / "sdm.csv", res.S, family, r)
    report = res.report(proximity(table, mv, renyi_f, res.S))
    report.update({"target": target, "family": family, "n": n, "r": r, "mu": mu})
    (out / "fit_report.json").write_text(json.dumps(report, indent=2))
    if family == FOURIER:
        pts = torus.mesh_points(n, M)
        vals = pdf_on_mesh(res.S, table, M).ravel()
    else:
        ax = np.linspace(-5.0, 5.0, M)
        pts = np.stack([g.ravel() for g in np.meshgrid(*([ax] * n), indexing="ij")], axis=1)
        vals = eval_pdf(res.S, table, pts)
    with open(out / "pdf_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{d + 1}" for d in range(n)] + ["p"])
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
    if not res.converged:
        logging.getLogger(__name__).warning("static fit did not converge (residual %.3g)", res.residual)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdmpdf", description="SDM approximation of PDFs and FPKE dynamics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("experiment", help="run the seeded torus experiment")
    ex.add_argument("--config", help="JSON file with ExperimentConfig fields")
    ex.add_argument("--seed", type=int)
    ex.add_argument("--out", required=True)
    ex.add_argument("--t-final", type=float)
    ex.add_argument("--amplitude-mean", type=float)
    ex.add_argument("--on-negative", choices=("raise", "record"))

    fit = sub.add_parser("fit", help="fit an SDM to a target density")
    fit.add_argument("--target", required=True, help="preset name or grid:<csv>")
    fit.add_argument("--family", choices=(FOURIER, HERMITE), default=FOURIER)
    fit.add_argument("--n", type=int, default=2)
    fit.add_argument("--r", type=int, default=2)
    fit.add_argument("--mu", type=float, default=0.01)
    fit.add_argument("--M", type=int, default=128)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--R", type=int, default=5)
    fit.add_argument("--amplitude-mean", type=float, default=DEFAULT_AMPLITUDE_MEAN)
    fit.add_argument("--sigma", type=float, default=1.0)
    fit.add_argument("--out", required=True)

    chk = sub.add_parser("check", help="run the invariant suite and print a JSON report")
    chk.add_argument("--mutations", action="store_true", help="also verify that a drift sign flip is caught")
    chk.add_argument("--out", help="write the report here as well")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "experiment":
        data = json.loads(Path(args.config).read_text()) if args.config else {}
        for key in ("seed", "t_final", "amplitude_mean", "on_negative"):
            if getattr(args, key) is not None:
                data[key] = getattr(args, key)
        config, defaults = ExperimentConfig.from_dict(data)
        try:
            result = cmd_experiment(config, args.out, defaults)
        except SdmError as exc:
            print(f"experiment failed: {exc}", file=sys.stderr)
            return 1
        print(json.dumps(result.summary(), indent=2))
        return 0
    if args.command == "fit":
        report = cmd_fit(args.target, args.family, args.n, args.r, args.mu, args.out, M=args.M,
                         **({"seed": args.seed, "R": args.R, "amplitude_mean": args.amplitude_mean,
                             "sigma": args.sigma} if args.target == "gibbs" else {}))
        print(json.dumps(report, indent=2))
        return 0 if report["converged"] else 2
    report = cmd_check(args.mutations)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    ok = report["passed"] and all(m["caught"] for m in report.get("mutations", []))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

"""Random trigonometric potentials on the torus and their analytic derivatives."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import torus

DEFAULT_AMPLITUDE_MEAN = 0.25


def _is_representative(k) -> bool:
    for v in k:
        if v:
            return v > 0
    return False


@dataclass(frozen=True)
class Potential:
    """Real trigonometric polynomial ``V(x) = sum_k V_k exp(i k.x)`` on the n-torus.

    Only the half-lattice (first nonzero entry positive) is stored; the other
    half follows from ``V_{-k} = conj(V_k)``.
    """

    n: int
    cutoff: int
    half: dict
    seed: int | None = None
    amplitude_mean: float | None = None
    constant: float = 0.0

    def __post_init__(self):
        for k in self.half:
            if len(k) != self.n or not _is_representative(k):
                raise ValueError(f"{k} is not a half-lattice representative in dimension {self.n}")

    @classmethod
    def from_coefficients(cls, coeffs: dict, n: int | None = None, **kw) -> "Potential":
        """Build from a full coefficient map; the conjugate symmetry is checked."""
        coeffs = {tuple(int(v) for v in k): complex(c) for k, c in coeffs.items()}
        n = n or len(next(iter(coeffs)))
        half, const = {}, 0.0
        for k, c in coeffs.items():
            if not any(k):
                if abs(c.imag) > 1e-14:
                    raise ValueError("constant term must be real")
                const = c.real
            elif _is_representative(k):
                mirror = coeffs.get(tuple(-v for v in k))
                if mirror is not None and abs(mirror - c.conjugate()) > 1e-14:
                    raise ValueError(f"V_{{-k}} != conj(V_k) at k={k}")
                half[k] = c
            elif tuple(-v for v in k) not in coeffs:
                half[tuple(-v for v in k)] = c.conjugate()
        cutoff = max((max(abs(v) for v in k) for k in half), default=0)
        return cls(n=n, cutoff=kw.pop("cutoff", cutoff), half=half, constant=const, **kw)

    def coefficient(self, k) -> complex:
        k = tuple(int(v) for v in k)
        if not any(k):
            return complex(self.constant)
        if k in self.half:
            return self.half[k]
        mk = tuple(-v for v in k)
        if mk in self.half:
            return self.half[mk].conjugate()
        return 0j

    def items(self):
        """All nonzero ``(k, V_k)`` pairs over the full lattice, sorted."""
        out = {}
        for k, c in self.half.items():
            out[k] = c
            out[tuple(-v for v in k)] = c.conjugate()
        if self.constant:
            out[(0,) * self.n] = complex(self.constant)
        return sorted(out.items())

    @cached_property
    def support(self) -> np.ndarray:
        return np.array([k for k, _ in self.items()], dtype=int).reshape(-1, self.n)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([c for _, c in self.items()], dtype=complex)

    def _terms(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return np.exp(1j * (X @ self.support.T)) * self.values

    def __call__(self, x):
        out = _checked_real(self._terms(x).sum(axis=1))
        return out[0] if np.ndim(x) == 1 else out

    def grad(self, x):
        out = _checked_real(1j * self._terms(x) @ self.support)
        return out[0] if np.ndim(x) == 1 else out

    def laplacian(self, x):
        K = self.support
        out = _checked_real(self._terms(x) @ -np.sum(K * K, axis=1))
        return out[0] if np.ndim(x) == 1 else out

    def on_mesh(self, M: int, derivative: int | None = None, laplacian: bool = False, shift=None) -> np.ndarray:
        """V, one partial derivative, or the Laplacian on the uniform M^n mesh."""
        K, c = self.support, self.values
        if derivative is not None:
            c = c * 1j * K[:, derivative]
        elif laplacian:
            c = c * -np.sum(K * K, axis=1)
        return _checked_real(torus.synthesize(c, K, self.n, M, shift=shift))

    def laplacian_sup(self, M: int = 200) -> float:
        """Mesh maximum of ``|Laplacian V|``."""
        return float(np.max(np.abs(self.on_mesh(M, laplacian=True))))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"k{d + 1}" for d in range(self.n)] + ["re", "im"])
            for k, c in sorted(self.half.items()):
                w.writerow(list(k) + [repr(float(c.real)), repr(float(c.imag))])

    def metadata(self) -> dict:
        return {"n": self.n, "R": self.cutoff, "seed": self.seed, "amplitude_mean": self.amplitude_mean,
                "pairs": len(self.half)}

    def save(self, directory, stem: str = "potential") -> None:
        directory = Path(directory)
        self.to_csv(directory / f"{stem}.csv")
        (directory / f"{stem}.json").write_text(json.dumps(self.metadata(), indent=2))

    @classmethod
    def load(cls, directory, stem: str = "potential") -> "Potential":
        directory = Path(directory)
        meta = json.loads((directory / f"{stem}.json").read_text())
        half = {}
        with open(directory / f"{stem}.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        for row in rows:
            k = tuple(int(v) for v in row[: meta["n"]])
            half[k] = complex(float(row[-2]), float(row[-1]))
        return cls(n=meta["n"], cutoff=meta["R"], half=half, seed=meta["seed"],
                   amplitude_mean=meta["amplitude_mean"])


def _checked_real(z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(z.real), initial=0.0)))
    if np.max(np.abs(z.imag), initial=0.0) > tol * scale:
        raise ArithmeticError("potential evaluation has a non-negligible imaginary part")
    return z.real


def sample_potential(n: int, R: int, seed: int, amplitude_mean: float = DEFAULT_AMPLITUDE_MEAN) -> Potential:
    """Random potential with harmonics ``0 < |k| <= R`` (Euclidean norm).

    For each conjugate pair, in lexicographic order of the representative k, an
    exponential amplitude (given mean) and a uniform phase on [0, 2 pi) are drawn
    from a Philox stream seeded by ``seed``.  The constant term is zero.
    """
    if R < 1:
        raise ValueError("cutoff R must be >= 1")
    if amplitude_mean <= 0:
        raise ValueError("amplitude_mean must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    reps = [k for k in itertools.product(range(-R, R + 1), repeat=n)
            if 0 < sum(v * v for v in k) <= R * R and _is_representative(k)]
    half = {}
    for k in sorted(reps):
        amp = rng.exponential(amplitude_mean)
        phase = rng.uniform(0.0, 2 * np.pi)
        half[k] = complex(amp * np.exp(1j * phase))
    return Potential(n=n, cutoff=R, half=half, seed=seed, amplitude_mean=amplitude_mean)

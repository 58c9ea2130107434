"""Orthonormal bases with algebraic structure: Fourier on the torus, Hermite on R^n.

Every basis here satisfies ``phi_j * conj(phi_k) = sum_l e_{jkl} phi_l`` with
finitely many nonzero structure coefficients.  The structure matrices
``E_l = (e_{jkl})_{j,k in Lambda}`` are the only thing the rest of the package
needs to know about a basis.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FOURIER = "fourier"
HERMITE = "hermite"
FAMILIES = (FOURIER, HERMITE)

MultiIndex = tuple[int, ...]


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown basis family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class IndexSet:
    """Ordered set of lattice multi-indices with O(1) position lookup."""

    kind: str
    indices: tuple[MultiIndex, ...]
    order: str = "lex"
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = tuple(tuple(int(v) for v in k) for k in self.indices)
        if not idx:
            raise ValueError("index set must be nonempty")
        n = len(idx[0])
        if n < 1 or any(len(k) != n for k in idx):
            raise ValueError("all multi-indices must share one dimension n >= 1")
        pos = {k: i for i, k in enumerate(idx)}
        if len(pos) != len(idx):
            raise ValueError("duplicate multi-indices")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "_pos", pos)

    @classmethod
    def from_iterable(cls, kind: str, indices: Iterable[Sequence[int]]) -> "IndexSet":
        """Build a lexicographically sorted set, dropping duplicates."""
        return cls(kind, tuple(sorted({tuple(int(v) for v in k) for k in indices})))

    @property
    def n(self) -> int:
        return len(self.indices[0])

    @property
    def array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(len(self), self.n)

    def position(self, k: Sequence[int]) -> int:
        return self._pos[tuple(int(v) for v in k)]

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, k) -> bool:
        return tuple(int(v) for v in k) in self._pos

    @property
    def zero(self) -> int:
        """Position of the origin."""
        return self._pos[(0,) * self.n]


def cube(lo: int, hi: int, n: int) -> list[MultiIndex]:
    """All points of ([lo, hi] cap Z)^n in lexicographic order."""
    return list(itertools.product(range(lo, hi + 1), repeat=n))


def minkowski(a: IndexSet, b: IndexSet, sign: int = 1, kind: str = "mho") -> IndexSet:
    """``{j + sign*k : j in a, k in b}``."""
    A, B = a.array, b.array
    pts = (A[:, None, :] + sign * B[None, :, :]).reshape(-1, a.n)
    return IndexSet.from_iterable(kind, map(tuple, np.unique(pts, axis=0)))


def build_index_set(family: str, n: int, r: int) -> tuple[IndexSet, IndexSet]:
    """Cube index set Lambda and its moment support mho.

    Fourier: ``Lambda = [-r, r]^n`` and ``mho = Lambda - Lambda = [-2r, 2r]^n``.
    Hermite: ``Lambda = [0, r]^n`` and ``mho = Lambda + Lambda = [0, 2r]^n``.
    """
    _check_family(family)
    if n < 1 or r < 1:
        raise ValueError(f"need n >= 1 and r >= 1, got n={n}, r={r}")
    if family == FOURIER:
        return IndexSet("lambda", tuple(cube(-r, r, n))), IndexSet("mho", tuple(cube(-2 * r, 2 * r, n)))
    return IndexSet("lambda", tuple(cube(0, r, n))), IndexSet("mho", tuple(cube(0, 2 * r, n)))


def _factorial(k: int) -> float:
    if k <= 20:
        return float(math.factorial(k))
    return math.exp(math.lgamma(k + 1))


def _hermite_coefficient_1d(j: int, k: int, l: int) -> float:
    s = j + k + l
    if s % 2:
        return 0.0
    m = s // 2
    if m < j or m < k or m < l:
        return 0.0
    if max(j, k, l) <= 20:
        num = math.sqrt(_factorial(j) * _factorial(k) * _factorial(l))
        return num / (_factorial(m - j) * _factorial(m - k) * _factorial(m - l))
    log_val = 0.5 * (math.lgamma(j + 1) + math.lgamma(k + 1) + math.lgamma(l + 1))
    log_val -= math.lgamma(m - j + 1) + math.lgamma(m - k + 1) + math.lgamma(m - l + 1)
    return math.exp(log_val)


def structure_coefficient(family: str, j: Sequence[int], k: Sequence[int], l: Sequence[int]) -> complex:
    """Structure coefficient ``e_{jkl} = E_nu(phi_j conj(phi_k) conj(phi_l))``."""
    _check_family(family)
    if not len(j) == len(k) == len(l):
        raise ValueError("indices must share a dimension")
    if family == FOURIER:
        return complex(all(a - b == c for a, b, c in zip(j, k, l)))
    if min(*j, *k, *l) < 0:
        raise ValueError("Hermite indices are nonnegative")
    out = 1.0
    for a, b, c in zip(j, k, l):
        out *= _hermite_coefficient_1d(a, b, c)
        if out == 0.0:
            break
    return complex(out)


@dataclass(frozen=True, eq=False)
class StructureTable:
    """Nonzero structure matrices ``E_l`` for ``l`` in mho, stacked as (L, N, N)."""

    family: str
    lam: IndexSet
    mho: IndexSet
    matrices: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.n

    @property
    def N(self) -> int:
        return len(self.lam)

    @property
    def L(self) -> int:
        return len(self.mho)

    @property
    def flat(self) -> np.ndarray:
        """Row ``l`` is ``E_l`` flattened row-major, shape (L, N*N)."""
        return self.matrices.reshape(self.L, -1)

    def matrix(self, l: Sequence[int]) -> np.ndarray:
        return self.matrices[self.mho.position(l)]

    def gram(self) -> np.ndarray:
        """Gram matrix ``(<E_l, E_m>)_{l,m}``."""
        F = self.flat
        return F.conj() @ F.T

    @cached_property
    def gram_norm(self) -> float:
        """Largest eigenvalue of the Gram matrix, i.e. the operator norm of A."""
        return float(np.linalg.eigvalsh(self.gram())[-1])


def build_structure_table(family: str, lam: IndexSet) -> StructureTable:
    """Collect every nonzero ``E_l``; the returned mho holds exactly those ``l``."""
    _check_family(family)
    N = len(lam)
    if family == FOURIER:
        cand = minkowski(lam, lam, sign=-1)
    else:
        cand = minkowski(lam, lam, sign=1)
    mats = np.zeros((len(cand), N, N), dtype=complex)
    if family == FOURIER:
        for a, j in enumerate(lam):
            for b, k in enumerate(lam):
                mats[cand.position(tuple(x - y for x, y in zip(j, k))), a, b] = 1.0
    else:
        for c, l in enumerate(cand):
            for a, j in enumerate(lam):
                for b, k in enumerate(lam):
                    mats[c, a, b] = structure_coefficient(family, j, k, l)
    keep = [c for c in range(len(cand)) if np.any(mats[c] != 0)]
    mho = IndexSet("mho", tuple(cand.indices[c] for c in keep))
    mats = mats[keep]
    mats.setflags(write=False)
    return StructureTable(family, lam, mho, mats)


def structure_table(family: str, n: int, r: int) -> StructureTable:
    """Shorthand for the cube index set and its structure table."""
    lam, _ = build_index_set(family, n, r)
    return build_structure_table(family, lam)


def _hermite_1d(x: np.ndarray, kmax: int) -> np.ndarray:
    """Normalized probabilists' Hermite functions ``He_k / sqrt(k!)``, k = 0..kmax.

    Uses ``phi_{k+1} = (x phi_k - sqrt(k) phi_{k-1}) / sqrt(k+1)``.
    """
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    for k in range(1, kmax):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def eval_basis_vector(family: str, indices: IndexSet, x) -> np.ndarray:
    """``Phi(x) = (phi_k(x))_{k in indices}``.

    ``x`` is a point of shape (n,) or a batch of shape (P, n); the result has
    shape (N,) or (P, N).
    """
    _check_family(family)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != indices.n:
        raise ValueError(f"points have dimension {X.shape[1]}, basis has {indices.n}")
    K = indices.array
    if family == FOURIER:
        out = np.exp(1j * (X @ K.T))
    else:
        kmax = int(K.max())
        per_axis = [_hermite_1d(X[:, d], kmax) for d in range(indices.n)]
        out = np.ones((X.shape[0], len(indices)))
        for d in range(indices.n):
            out *= per_axis[d][K[:, d]].T
        out = out.astype(complex)
    return out[0] if single else out


def weight(family: str, x) -> np.ndarray | float:
    """Weight nu(x): uniform ``(2 pi)^-n`` on the torus, standard normal on R^n."""
    _check_family(family)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if family == FOURIER:
        val = np.full(x.shape[:-1], (2 * np.pi) ** (-n))
    else:
        val = (2 * np.pi) ** (-n / 2) * np.exp(-0.5 * np.sum(x * x, axis=-1))
    return float(val) if val.ndim == 0 else val


def effective_dimension(table: StructureTable, rtol: float = 1e-10) -> int:
    """Numerical rank of the Gram matrix of the structure matrices."""
    s = np.linalg.svd(table.gram(), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _index_tag(l: Sequence[int]) -> str:
    return "_".join(str(v) for v in l)


def export_structure_csv(table: StructureTable, directory: str | Path) -> list[Path]:
    """One ``E_<l>.csv`` per structure matrix; each row holds re,im pairs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for l, E in zip(table.mho, table.matrices):
        path = directory / f"E_{_index_tag(l)}.csv"
        write_complex_csv(path, E)
        paths.append(path)
    return paths


def write_complex_csv(path: Path, mat: np.ndarray, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        for row in np.asarray(mat):
            cells = []
            for z in row:
                cells += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(cells)


def read_complex_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    """Inverse of :func:`write_complex_csv`; returns the matrix and any '#' header lines."""
    header, rows = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                header.append(line.rstrip("\n"))
            elif line.strip():
                vals = [float(v) for v in line.strip().split(",")]
                rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    return np.array(rows), header

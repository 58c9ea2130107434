"""Uniform periodic meshes on the torus [0, 2pi)^n and FFT-based trigonometric transforms."""

from __future__ import annotations

import numpy as np


def mesh_axes(M: int) -> np.ndarray:
    return 2 * np.pi * np.arange(M) / M


def mesh_points(n: int, M: int) -> np.ndarray:
    """Mesh nodes ``x_i = 2 pi i / M`` as an (M**n, n) array, C order over axes."""
    ax = mesh_axes(M)
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def cell_volume(n: int, M: int) -> float:
    return (2 * np.pi / M) ** n


def synthesize(coeffs, indices, n: int, M: int, shift=None) -> np.ndarray:
    """Values of ``sum_k c_k exp(i k.x)`` at mesh nodes shifted by ``shift``.

    Exact at the nodes for any k, since ``exp(i k x_j)`` only depends on k mod M.
    Returns a complex array of shape (M,)*n.
    """
    K = np.asarray(indices, dtype=int).reshape(-1, n)
    c = np.asarray(coeffs, dtype=complex).ravel()
    if shift is not None:
        c = c * np.exp(1j * (K @ (np.broadcast_to(np.asarray(shift, dtype=float), (n,)))))
    A = np.zeros((M,) * n, dtype=complex)
    np.add.at(A, tuple((K % M).T), c)
    return np.fft.ifftn(A) * M**n


def exp_moments(values: np.ndarray, indices, n: int) -> np.ndarray:
    """Rectangle-rule ``int f(x) exp(i k.x) dx`` over the torus for each k."""
    M = values.shape[0]
    K = np.asarray(indices, dtype=int).reshape(-1, n)
    coeffs = np.fft.ifftn(values) * (2 * np.pi) ** n
    return coeffs[tuple((K % M).T)]


def integrate(values: np.ndarray) -> float:
    n = values.ndim
    return float(np.sum(values) * cell_volume(n, values.shape[0]))

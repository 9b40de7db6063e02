"""Small symmetric-matrix helpers built on the symmetric eigendecomposition."""

from __future__ import annotations

import numpy as np


class DefinitenessError(ArithmeticError):
    def __init__(self, min_eig: float, tol: float):
        self.min_eig = min_eig
        self.tol = tol
        super().__init__(
            f"matrix is not safely positive definite: min eigenvalue {min_eig:.3e} <= tol {tol:.3e}"
        )


def symmetrize(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def asymmetry(m) -> float:
    """max |m_ij - m_ji| relative to the Frobenius norm (0 for the zero matrix)."""
    m = np.asarray(m, dtype=float)
    nrm = np.linalg.norm(m)
    if nrm == 0.0:
        return 0.0
    return float(np.max(np.abs(m - m.T)) / nrm)


def inv_sqrt_spd(m, tol_pd: float | None = None) -> np.ndarray:
    """Symmetric inverse square root N with N m N = I.

    The input is symmetrized as (m + m') / 2 first. No eigenvalue clamping:
    if the smallest eigenvalue is not above ``tol_pd`` (default
    ``1e-10 * trace / p``) a :class:`DefinitenessError` is raised.
    """
    m = symmetrize(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    p = m.shape[0]
    if tol_pd is None:
        tol_pd = 1e-10 * abs(np.trace(m)) / p
    w, v = np.linalg.eigh(m)
    if not w[0] > tol_pd:
        raise DefinitenessError(float(w[0]), float(tol_pd))
    n = (v / np.sqrt(w)) @ v.T
    return symmetrize(n)


def off_diag_sq(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    mask = ~np.eye(m.shape[0], dtype=bool)
    return float(np.sum(m[mask] ** 2))


def min_eig(m) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m))[0])

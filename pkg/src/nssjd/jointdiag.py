"""Orthogonal joint diagonalization by cyclic Jacobi (Givens) rotations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .symlinalg import asymmetry

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class JdResult:
    """Result of :func:`joint_diagonalize`.

    ``u`` is orthogonal and ``u @ M_i @ u.T`` is as diagonal as possible.
    ``history`` holds ``(objective, off_diagonal_mass)`` for the starting
    point and after every sweep.
    """

    u: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    final_max_angle: float
    history: list = field(default_factory=list)


def _stack(mats) -> np.ndarray:
    m = np.array(mats, dtype=float)
    if m.ndim == 2:
        m = m[None]
    if m.ndim != 3 or m.shape[1] != m.shape[2]:
        raise ValueError("expected a list of square p x p matrices")
    if m.shape[0] < 1:
        raise ValueError("need at least one matrix")
    return m


def objective_g(u, mats) -> float:
    """Sum over matrices of the squared Frobenius norm of diag(U M U')."""
    u = np.asarray(u, dtype=float)
    m = _stack(mats)
    if u.shape != m.shape[1:]:
        raise ValueError(f"dimension mismatch: U {u.shape} vs matrices {m.shape[1:]}")
    rotated = np.einsum("ia,kab,jb->kij", u, m, u)
    return float(np.sum(np.diagonal(rotated, axis1=1, axis2=2) ** 2))


def _mass(m: np.ndarray) -> tuple[float, float]:
    mask = ~np.eye(m.shape[1], dtype=bool)
    diag = float(np.sum(np.diagonal(m, axis1=1, axis2=2) ** 2))
    return diag, float(np.sum(m[:, mask] ** 2))


def givens_angle(m: np.ndarray, a: int, b: int) -> float:
    """Optimal rotation angle for the pair (a, b), in (-pi/4, pi/4].

    Built from the dominant eigenvector of sum_i h_i h_i' with
    h_i = (M_aa - M_bb, 2 M_ab).
    """
    h0 = m[:, a, a] - m[:, b, b]
    h1 = m[:, a, b] + m[:, b, a]
    ton = float(h0 @ h0 - h1 @ h1)
    toff = float(2.0 * (h0 @ h1))
    r = math.hypot(ton, toff)
    if r == 0.0:
        return 0.0
    if ton + r == 0.0:
        # toff == 0 and ton < 0: the optimum sits on the branch edge
        return math.pi / 4
    return 0.5 * math.atan2(toff, ton + r)


def _rotate(m: np.ndarray, v: np.ndarray, a: int, b: int, c: float, s: float) -> None:
    ca = m[:, :, a].copy()
    cb = m[:, :, b].copy()
    m[:, :, a] = c * ca + s * cb
    m[:, :, b] = c * cb - s * ca
    ra = m[:, a, :].copy()
    rb = m[:, b, :].copy()
    m[:, a, :] = c * ra + s * rb
    m[:, b, :] = c * rb - s * ra
    va = v[:, a].copy()
    vb = v[:, b].copy()
    v[:, a] = c * va + s * vb
    v[:, b] = c * vb - s * va


def canonicalize_rows(u: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    u = np.array(u, dtype=float)
    idx = np.argmax(np.abs(u), axis=1)
    signs = np.sign(u[np.arange(u.shape[0]), idx])
    signs[signs == 0] = 1.0
    return u * signs[:, None]


def joint_diagonalize(mats, tol: float = 1e-10, max_sweeps: int = 200) -> JdResult:
    """Maximize g(U) = sum_i ||diag(U M_i U')||^2 over orthogonal U.

    Pairs (a, b), a < b, are visited in lexicographic order each sweep.
    Convergence is declared when every angle in a sweep is below ``tol``;
    running out of sweeps returns ``converged=False`` rather than raising.
    """
    m = _stack(mats)
    if tol <= 0:
        raise ValueError("tol must be positive")
    for i, mi in enumerate(m):
        if asymmetry(mi) > SYMMETRY_TOL:
            raise ValueError(f"matrix {i} is not symmetric (relative asymmetry {asymmetry(mi):.2e})")
    m = 0.5 * (m + np.transpose(m, (0, 2, 1)))
    p = m.shape[1]
    v = np.eye(p)
    history = [_mass(m)]
    converged = p == 1
    sweeps = 0
    max_angle = 0.0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        max_angle = 0.0
        for a in range(p - 1):
            for b in range(a + 1, p):
                theta = givens_angle(m, a, b)
                max_angle = max(max_angle, abs(theta))
                if abs(theta) >= tol:
                    _rotate(m, v, a, b, math.cos(theta), math.sin(theta))
        history.append(_mass(m))
        converged = max_angle < tol
    u = canonicalize_rows(v.T)
    return JdResult(
        u=u,
        objective=objective_g(u, mats),
        sweeps=sweeps,
        converged=converged,
        final_max_angle=max_angle,
        history=history,
    )

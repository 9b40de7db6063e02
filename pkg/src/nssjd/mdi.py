"""Minimum distance index and the signed-permutation matching behind it."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True, eq=False)
class SignedPermutation:
    """Row i of ``G @ m`` is ``signs[i] * m[perm[i]]``."""

    perm: tuple
    signs: tuple

    def __post_init__(self):
        p = len(self.perm)
        if sorted(self.perm) != list(range(p)) or len(self.signs) != p:
            raise ValueError("perm must be a permutation of 0..p-1 with one sign per entry")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +-1")

    def matrix(self) -> np.ndarray:
        p = len(self.perm)
        g = np.zeros((p, p))
        g[np.arange(p), list(self.perm)] = self.signs
        return g

    def __eq__(self, other):
        if not isinstance(other, SignedPermutation):
            return NotImplemented
        return tuple(self.perm) == tuple(other.perm) and tuple(self.signs) == tuple(other.signs)

    __hash__ = None

    @classmethod
    def from_matrix(cls, g) -> "SignedPermutation":
        g = np.asarray(g)
        perm = tuple(int(np.flatnonzero(row)[0]) for row in g)
        signs = tuple(int(np.sign(g[i, j])) for i, j in enumerate(perm))
        return cls(perm, signs)


@dataclass(frozen=True, eq=False)
class MdiReport:
    mdi: float
    adapted: float | None
    best_g: SignedPermutation
    gain_matrix: np.ndarray


def assignment_costs(m: np.ndarray) -> np.ndarray:
    """cost[i, j] = ||m_j||^2 - 2 |m_ji| + 1: placing row j of m at row i."""
    m = np.asarray(m, dtype=float)
    row_sq = np.sum(m * m, axis=1)
    return row_sq[None, :] - 2.0 * np.abs(m.T) + 1.0


def optimal_signed_permutation(m) -> tuple[SignedPermutation, float]:
    """Minimize ||G m - I||_F over signed permutations G.

    Solved exactly as a linear assignment problem; the optimal sign for
    each assignment is the sign of the matched entry (+1 on zero).
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    cost = assignment_costs(m)
    rows, cols = linear_sum_assignment(cost)
    perm = tuple(int(c) for c in cols[np.argsort(rows)])
    signs = tuple(1 if m[j, i] >= 0 else -1 for i, j in enumerate(perm))
    g = SignedPermutation(perm, signs)
    dist = float(np.linalg.norm(g.matrix() @ m - np.eye(m.shape[0])))
    return g, dist


def exhaustive_signed_permutation(m) -> tuple[SignedPermutation, float]:
    """Brute force over all 2^p p! signed permutations; for checking small p."""
    m = np.asarray(m, dtype=float)
    p = m.shape[0]
    eye = np.eye(p)
    best = None
    for perm in itertools.permutations(range(p)):
        for signs in itertools.product((1, -1), repeat=p):
            g = SignedPermutation(perm, signs)
            d = float(np.linalg.norm(g.matrix() @ m - eye))
            if best is None or d < best[1]:
                best = (g, d)
    return best


def mdi(w, a) -> MdiReport:
    """MDI(W) = inf_G ||G W A - I||_F / sqrt(p - 1).

    Values above 1 are possible when ``W A`` is not normalized the way the
    estimator normalizes it; the formula is applied as is.
    """
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    p = w.shape[0]
    if p < 2:
        raise ValueError("the minimum distance index needs p >= 2")
    gain = w @ a
    g, dist = optimal_signed_permutation(gain)
    return MdiReport(mdi=dist / math.sqrt(p - 1), adapted=None, best_g=g, gain_matrix=gain)


def adapted_mdi(mdi_value: float, k: int, p: int) -> float:
    return k * (p - 1) * mdi_value**2


def mdi_report(w, a, k: int) -> MdiReport:
    r = mdi(w, a)
    p = r.gain_matrix.shape[0]
    return MdiReport(r.mdi, adapted_mdi(r.mdi, k, p), r.best_g, r.gain_matrix)

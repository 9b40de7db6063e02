"""Block-wise centred covariance matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SeriesMatrix


@dataclass(frozen=True, eq=False)
class BlockCovSet:
    """K per-block covariance matrices (K, p, p) and their average."""

    per_block: np.ndarray
    average: np.ndarray
    block_len: int
    n_blocks: int
    n_dropped_tail: int

    @property
    def dim(self) -> int:
        return self.average.shape[0]

    def psd_violation(self) -> float:
        """Most negative eigenvalue relative to the trace, over all blocks (0 if none)."""
        worst = 0.0
        for c in self.per_block:
            tr = np.trace(c)
            if tr <= 0:
                continue
            lo = np.linalg.eigvalsh(c)[0] / tr
            worst = min(worst, lo)
        return max(0.0, -float(worst))


def block_matrices(values: np.ndarray, s: int) -> np.ndarray:
    """Centred covariance of each complete length-s block, shape (K, p, p)."""
    t_len, p = values.shape
    k = t_len // s
    blocks = values[: k * s].reshape(k, s, p)
    centred = blocks - blocks.mean(axis=1, keepdims=True)
    return np.matmul(centred.transpose(0, 2, 1), centred) / s


def block_covariances(x: SeriesMatrix | np.ndarray, s: int) -> BlockCovSet:
    """Split ``x`` into K = floor(T/s) blocks and centre each by its own mean.

    The divisor is ``s``; the trailing ``T mod s`` rows are dropped.
    """
    values = x.values if isinstance(x, SeriesMatrix) else np.asarray(x, dtype=float)
    s = int(s)
    t_len = values.shape[0]
    if s < 2:
        raise ValueError(f"block length must be >= 2, got {s}")
    if t_len < s:
        raise ValueError(f"series length {t_len} is shorter than the block length {s}")
    per_block = block_matrices(values, s)
    k = per_block.shape[0]
    # fixed left-to-right summation keeps the average bit-stable
    total = np.zeros_like(per_block[0])
    for c in per_block:
        total = total + c
    return BlockCovSet(
        per_block=per_block,
        average=total / k,
        block_len=s,
        n_blocks=k,
        n_dropped_tail=t_len - k * s,
    )


def population_block_covariances(model, k: int, s: int, layout=None) -> list[np.ndarray]:
    """Population block covariances cov_{Z,i} as diagonal p x p matrices.

    Random-layout models (M1, M2) need the realized ``layout``.
    """
    from .models import population_block_moments

    moments = population_block_moments(model, k, s, layout=layout, full=False)
    return [np.diag(c) for c in moments.c]

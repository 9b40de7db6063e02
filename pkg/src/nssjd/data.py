"""Series container, deterministic random streams and CSV ingestion.

Random streams
--------------
Every random draw in the package goes through :class:`RngStream`. A stream
is the pair ``(master_seed, stream_index)``; it is turned into a numpy
``Philox4x32-10`` counter-based generator whose 128-bit key is

    key = (mix64(master_seed, stream_index), mix64(master_seed ^ KEY_SALT, stream_index))

where ``mix64`` is the SplitMix64 finalizer applied to
``master_seed + (stream_index + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``.
Child streams are ``RngStream(mix64(seed, index), child_index)`` so nested
hierarchies (cell -> repetition -> component) never collide in practice.
Test vectors live in ``tests/test_data.py``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
KEY_SALT = 0xD1B54A32D192ED03

CSV_DIGITS = 17


class SeriesFormatError(ValueError):
    """Raised when a series CSV file cannot be parsed."""


def splitmix64(z: int) -> int:
    """SplitMix64 output finalizer (Stafford variant 13)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(seed: int, index: int) -> int:
    return splitmix64((int(seed) + (int(index) + 1) * GOLDEN_GAMMA) & MASK64)


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_index", int(self.stream_index))
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def key(self) -> tuple[int, int]:
        return (
            mix64(self.master_seed, self.stream_index),
            mix64(self.master_seed ^ KEY_SALT, self.stream_index),
        )

    def generator(self) -> np.random.Generator:
        """A fresh generator; each call replays the same draw sequence."""
        return np.random.Generator(np.random.Philox(key=np.array(self.key(), dtype=np.uint64)))

    def child(self, index: int) -> "RngStream":
        return child_stream(self, index)

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "stream_index": self.stream_index}

    @classmethod
    def from_dict(cls, d: dict) -> "RngStream":
        return cls(int(d["master_seed"]), int(d.get("stream_index", 0)))


def child_stream(master: RngStream, index: int) -> RngStream:
    if index < 0:
        raise ValueError("child index must be non-negative")
    return RngStream(mix64(master.master_seed, master.stream_index), index)


@dataclass(frozen=True, eq=False)
class SeriesMatrix:
    """T x p observations, rows are time instants."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2:
            raise ValueError("series values must be a 2-d array (T x p)")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("series needs T >= 1 and p >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite entries")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SeriesMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


# Flattened p x p index, row-major: (e, f) -> e * p + f, zero based.
# The one-based form is (e - 1) * p + f.

def quad_flat(e: int, f: int, p: int) -> int:
    if not (0 <= e < p and 0 <= f < p):
        raise IndexError("quad index out of range")
    return e * p + f


def quad_unflat(k: int, p: int) -> tuple[int, int]:
    if not 0 <= k < p * p:
        raise IndexError("flat index out of range")
    return divmod(k, p)


def fmt(x: float) -> str:
    return format(float(x), f".{CSV_DIGITS}g")


def load_series_csv(path) -> SeriesMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SeriesFormatError(f"{path}: empty file, expected header row")
    header = [h.strip() for h in rows[0]]
    p = len(header) - 1
    expected = ["t"] + [f"series_{k}" for k in range(1, p + 1)]
    if p < 1 or header != expected:
        raise SeriesFormatError(f"{path}: row 1: malformed header {header!r}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise SeriesFormatError(f"{path}: no observations")
    values = np.empty((len(body), p))
    last_t = -math.inf
    for i, row in enumerate(body):
        lineno = i + 2
        if len(row) != p + 1:
            raise SeriesFormatError(
                f"{path}: row {lineno}: expected {p + 1} cells, got {len(row)}"
            )
        try:
            t = float(row[0])
        except ValueError:
            raise SeriesFormatError(f"{path}: row {lineno}: non-numeric t {row[0]!r}") from None
        if not t > last_t:
            raise SeriesFormatError(f"{path}: row {lineno}: t not strictly increasing")
        last_t = t
        for k, cell in enumerate(row[1:]):
            try:
                x = float(cell)
            except ValueError:
                raise SeriesFormatError(
                    f"{path}: row {lineno}, column series_{k + 1}: non-numeric cell {cell!r}"
                ) from None
            if not math.isfinite(x):
                raise SeriesFormatError(
                    f"{path}: row {lineno}, column series_{k + 1}: non-finite cell {cell!r}"
                )
            values[i, k] = x
    return SeriesMatrix(values)


def write_series_csv(series: SeriesMatrix, path) -> None:
    p = series.dim
    lines = [",".join(["t"] + [f"series_{k}" for k in range(1, p + 1)])]
    for t, row in enumerate(series.values, start=1):
        lines.append(",".join([str(t)] + [fmt(x) for x in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(m: np.ndarray, path) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    Path(path).write_text("\n".join(",".join(fmt(x) for x in row) for row in m) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        m = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise SeriesFormatError(f"{path}: {exc}") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SeriesFormatError(f"{path}: expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise SeriesFormatError(f"{path}: non-finite matrix entry")
    return m

"""Pairwise distances between spectrum vectors in condensed storage.

Distances use the inner-product form
``sqrt(<a,a> + <b,b> - 2<a,b>)`` with the radicand clamped at zero.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, SizeError, ValidationError


def _values(v) -> np.ndarray:
    return np.asarray(getattr(v, "values", v), dtype=np.float64).reshape(-1)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Upper triangle (i < j, row-major) of a symmetric zero-diagonal matrix."""

    n_points: int
    condensed: np.ndarray

    def __post_init__(self):
        c = np.array(self.condensed, dtype=np.float64).reshape(-1)
        n = int(self.n_points)
        if n < 1 or c.size != n * (n - 1) // 2:
            raise SizeError(f"condensed length {c.size} does not match n_points={n}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("distances must be finite and non-negative", ["condensed"])
        c.setflags(write=False)
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "condensed", c)

    def index(self, i: int, j: int) -> int:
        if i == j:
            raise IndexError("diagonal is not stored")
        if i > j:
            i, j = j, i
        n = self.n_points
        return n * i - i * (i + 1) // 2 + (j - i - 1)

    def __getitem__(self, ij) -> float:
        i, j = ij
        return 0.0 if i == j else float(self.condensed[self.index(i, j)])

    def square(self) -> np.ndarray:
        n = self.n_points
        out = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        out[iu] = self.condensed
        out[iu[::-1]] = self.condensed
        return out

    @classmethod
    def from_square(cls, d) -> "DistanceMatrix":
        d = np.asarray(d, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise SizeError("expected a square matrix")
        return cls(d.shape[0], d[np.triu_indices(d.shape[0], 1)])


def distance(a, b) -> float:
    a, b = _values(a), _values(b)
    if a.size != b.size:
        raise SizeError(f"dimension mismatch: {a.size} vs {b.size}")
    r = float(np.dot(a, a)) + float(np.dot(b, b)) - 2.0 * float(np.dot(a, b))
    return math.sqrt(r) if r > 0.0 else 0.0


def pairwise_sq(a, b) -> np.ndarray:
    """Clamped squared distances between rows of ``a`` and rows of ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    r = np.einsum("ij,ij->i", a, a)[:, None] + np.einsum("ij,ij->i", b, b)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(r, 0.0)


def distance_matrix(vectors) -> DistanceMatrix:
    mat = np.stack([_values(v) for v in vectors]) if len(vectors) else np.empty((0, 0))
    if mat.shape[0] < 2:
        raise SizeError(f"need at least 2 vectors, got {mat.shape[0]}")
    sq = pairwise_sq(mat, mat)
    iu = np.triu_indices(mat.shape[0], 1)
    return DistanceMatrix(mat.shape[0], np.sqrt(sq[iu]))


# -- export -------------------------------------------------------------------

_MAGIC = b"BTDM"


def write_distance_matrix(dm: DistanceMatrix, path):
    """``.csv`` writes an ``n_points`` header line then one value per line;
    anything else is a little-endian binary: magic, uint64 n, float64 data."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_points", dm.n_points])
            for x in dm.condensed:
                w.writerow([repr(float(x))])
    else:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<Q", dm.n_points))
            fh.write(dm.condensed.astype("<f8").tobytes())
    return path


def read_distance_matrix(path) -> DistanceMatrix:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "n_points":
            raise FormatError(f"{path}: missing n_points header")
        return DistanceMatrix(int(rows[0][1]), np.array([r[0] for r in rows[1:]], dtype=np.float64))
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not a condensed distance file")
    (n,) = struct.unpack("<Q", raw[4:12])
    return DistanceMatrix(n, np.frombuffer(raw[12:], dtype="<f8"))

"""Torus metric and block partition of the unit torus (-1/2, 1/2]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def normalize(x):
    """Map coordinates onto the half-open interval (-1/2, 1/2].

    Uses round-half-to-even, so the result is deterministic for every float.
    """
    arr = np.asarray(x, dtype=np.float64)
    y = arr - np.round(arr)
    y = np.where(y == -0.5, 0.5, y)
    if np.ndim(x) == 0:
        return float(y)
    return y


def torus_distance(x, y):
    """Wraparound distance min(|x - y|, 1 - |x - y|); broadcasts over arrays."""
    a = np.mod(np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)), 1.0)
    d = np.minimum(a, 1.0 - a)
    if np.ndim(d) == 0:
        return float(d)
    return d


def shifted(x):
    """Coordinate remapped to [0, 1), the frame in which blocks are laid out."""
    s = np.mod(np.asarray(x, dtype=np.float64), 1.0)
    # mod can round tiny negatives up to exactly 1.0
    s = np.where(s >= 1.0, 0.0, s)
    if np.ndim(x) == 0:
        return float(s)
    return s


def support_radius(n: int, kappa: float) -> float:
    """Largest distance kappa * log(n) / n at which an edge is possible."""
    return kappa * math.log(n) / n


@dataclass(frozen=True)
class BlockPartition:
    """Division of the torus into blocks of width kappa*log(n)/n.

    Blocks are 0-indexed; block ``i`` covers ``[i*w, (i+1)*w)`` in the shifted
    frame ``[0, 1)``. The last block is narrower unless ``1/w`` is integral.
    """

    n: int
    kappa: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"n must be >= 3, got {self.n}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.block_width >= 0.5:
            raise ValueError(
                f"block width kappa*log(n)/n = {self.block_width:.4g} must be < 1/2 "
                f"(n={self.n}, kappa={self.kappa})"
            )

    @property
    def block_width(self) -> float:
        return support_radius(self.n, self.kappa)

    @property
    def block_count(self) -> int:
        return math.ceil(self.n / (self.kappa * math.log(self.n)))

    def widths(self) -> np.ndarray:
        w = self.block_width
        b = self.block_count
        out = np.full(b, w)
        out[-1] = 1.0 - (b - 1) * w
        return out

    def bounds(self, i: int) -> tuple[float, float]:
        """(start, end) of block ``i`` in the shifted frame."""
        w = self.block_width
        end = 1.0 if i == self.block_count - 1 else (i + 1) * w
        return i * w, end

    def assign(self, x) -> np.ndarray:
        """Block index of each coordinate."""
        idx = np.floor(shifted(x) / self.block_width).astype(np.int64)
        return np.minimum(idx, self.block_count - 1)

    def gap(self, i, j):
        """Cyclic index distance between blocks."""
        d = np.abs(np.asarray(i) - np.asarray(j)) % self.block_count
        return np.minimum(d, self.block_count - d)

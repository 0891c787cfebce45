"""Dyadic cubes of the unit cube and piecewise-constant weights."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .orlicz import luxembourg_norms

__all__ = [
    "DyadicCube",
    "WeightGrid",
    "GridError",
    "all_cubes",
    "average",
    "weighted_average",
    "cube_samples",
    "level_blocks",
    "level_averages",
    "level_orlicz",
    "broadcast_level",
    "orlicz_all_levels",
    "MAX_DEPTH",
]

#: depth limits per dimension
MAX_DEPTH = {1: 16, 2: 8, 3: 5}


class GridError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DyadicCube:
    """2^{-level}([0,1)^d + index)."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise GridError("negative cube level")
        side = 1 << self.level
        if any(i < 0 or i >= side for i in self.index):
            raise GridError(f"index {self.index} out of range at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.index)

    @classmethod
    def root(cls, d: int = 1) -> "DyadicCube":
        return cls(0, (0,) * d)

    def measure(self) -> Fraction:
        return Fraction(1, 1 << (self.level * self.d))

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GridError("the root has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def ancestor(self, level: int) -> "DyadicCube":
        shift = self.level - level
        if shift < 0:
            raise GridError("ancestor level below cube level")
        return DyadicCube(level, tuple(i >> shift for i in self.index))

    def children(self) -> list["DyadicCube"]:
        d = self.d
        out = []
        for bits in range(1 << d):
            out.append(
                DyadicCube(
                    self.level + 1,
                    tuple(2 * i + ((bits >> (d - 1 - k)) & 1) for k, i in enumerate(self.index)),
                )
            )
        return out

    def contains(self, other: "DyadicCube") -> bool:
        """Q contains Q' (not necessarily strictly)."""
        if other.level < self.level:
            return False
        return other.ancestor(self.level) == self

    def flat(self) -> int:
        """Position among the cubes of its level in C order."""
        return int(np.ravel_multi_index(self.index, (1 << self.level,) * self.d))

    @classmethod
    def from_flat(cls, level: int, k: int, d: int) -> "DyadicCube":
        return cls(level, tuple(int(i) for i in np.unravel_index(k, (1 << level,) * d)))

    def slices(self, depth: int) -> tuple[slice, ...]:
        """Index slices of the finest cells of a depth-``depth`` grid inside the cube."""
        if self.level > depth:
            raise GridError(f"cube at level {self.level} is deeper than the grid (depth {depth})")
        size = 1 << (depth - self.level)
        return tuple(slice(i * size, (i + 1) * size) for i in self.index)


@dataclass(frozen=True, eq=False)
class WeightGrid:
    """Nonnegative density, constant on the finest dyadic cells at depth L."""

    d: int
    L: int
    cells: np.ndarray

    def __post_init__(self):
        if self.d < 1 or self.L < 0:
            raise GridError("dimension must be positive and depth nonnegative")
        if self.L > MAX_DEPTH.get(self.d, 0):
            raise GridError(f"depth {self.L} exceeds the supported maximum for d={self.d}")
        n = 1 << self.L
        arr = np.array(self.cells, dtype=float)
        if arr.size != n**self.d:
            raise GridError(f"expected {n ** self.d} cells, got {arr.size}")
        arr = arr.reshape((n,) * self.d)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise GridError("weights must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @classmethod
    def constant(cls, d: int, L: int, value: float = 1.0) -> "WeightGrid":
        return cls(d, L, np.full((1 << L,) * d, float(value)))

    @property
    def n_cells(self) -> int:
        return self.cells.size

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.L * self.d)

    def mass(self, Q: DyadicCube) -> float:
        """sigma(Q)."""
        return float(self.cells[Q.slices(self.L)].sum()) * self.cell_measure

    def total(self) -> float:
        return float(self.cells.sum()) * self.cell_measure

    def with_cells(self, cells) -> "WeightGrid":
        return WeightGrid(self.d, self.L, cells)

    def __eq__(self, other):
        if not isinstance(other, WeightGrid):
            return NotImplemented
        return self.d == other.d and self.L == other.L and np.array_equal(self.cells, other.cells)

    __hash__ = None


def _cells(f, shape=None) -> np.ndarray:
    arr = f.cells if isinstance(f, WeightGrid) else np.asarray(f, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def all_cubes(d: int, depth: int) -> Iterator[DyadicCube]:
    for level in range(depth + 1):
        for k in range((1 << level) ** d):
            yield DyadicCube.from_flat(level, k, d)


def average(sigma: WeightGrid, Q: DyadicCube) -> float:
    """sigma(Q) / |Q|."""
    return float(sigma.cells[Q.slices(sigma.L)].mean())


def weighted_average(g, w: WeightGrid, Q: DyadicCube) -> float:
    """w(Q)^{-1} int_Q g dw, with 0 when w(Q) = 0."""
    sl = Q.slices(w.L)
    wq = w.cells[sl]
    total = float(wq.sum())
    if total == 0.0:
        return 0.0
    return float((_cells(g, w.cells.shape)[sl] * wq).sum() / total)


def cube_samples(f, Q: DyadicCube, depth: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Finest-cell values of f in Q with uniform masses summing to 1."""
    arr = _cells(f)
    depth = depth if depth is not None else int(round(np.log2(arr.shape[0])))
    vals = arr[Q.slices(depth)].ravel()
    return vals, np.full(vals.size, 1.0 / vals.size)


def level_blocks(f, level: int) -> np.ndarray:
    """Cells of f grouped by the cubes of ``level``: shape (#cubes, #cells per cube)."""
    arr = _cells(f)
    d = arr.ndim
    n = arr.shape[0]
    side = 1 << level
    if side > n:
        raise GridError("level deeper than the grid")
    b = n // side
    shaped = arr.reshape(sum(((side, b) for _ in range(d)), ()))
    order = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
    return shaped.transpose(order).reshape(side**d, b**d)


def level_averages(f, level: int) -> np.ndarray:
    """Averages over all cubes of ``level`` in flat order."""
    return level_blocks(f, level).mean(axis=1)


def level_orlicz(f, A, level: int, tol: float = 1e-9) -> np.ndarray:
    """Luxembourg averages <f>_{A,Q} over all cubes of ``level``."""
    blocks = level_blocks(f, level)
    return luxembourg_norms(blocks, np.full(blocks.shape[1], 1.0 / blocks.shape[1]), A, tol)


def orlicz_all_levels(f, A, tol: float = 1e-9, narrow: int = 32) -> list[np.ndarray]:
    """level_orlicz for every level 0..depth.

    Levels whose cubes hold at most ``narrow`` cells are zero-padded and solved
    as one batch; wider levels are solved one at a time.
    """
    arr = _cells(f)
    depth = int(round(np.log2(arr.shape[0])))
    out: list[np.ndarray | None] = [None] * (depth + 1)
    batch, sizes, idx = [], [], []
    for k in range(depth + 1):
        b = level_blocks(arr, k)
        if b.shape[1] > narrow:
            out[k] = luxembourg_norms(b, np.full(b.shape[1], 1.0 / b.shape[1]), A, tol)
            continue
        width = min(narrow, arr.size)
        pad = np.zeros((b.shape[0], width))
        pad[:, : b.shape[1]] = b
        m = np.zeros((b.shape[0], width))
        m[:, : b.shape[1]] = 1.0 / b.shape[1]
        batch.append((pad, m))
        sizes.append(b.shape[0])
        idx.append(k)
    if batch:
        flat = luxembourg_norms(np.vstack([b for b, _ in batch]), np.vstack([m for _, m in batch]), A, tol)
        for k, part in zip(idx, np.split(flat, np.cumsum(sizes)[:-1])):
            out[k] = part
    return out


def broadcast_level(values: np.ndarray, level: int, d: int, depth: int) -> np.ndarray:
    """Spread per-cube values of ``level`` onto the finest cells."""
    side = 1 << level
    arr = np.asarray(values).reshape((side,) * d)
    b = 1 << (depth - level)
    for axis in range(d):
        arr = np.repeat(arr, b, axis=axis)
    return arr

"""Sparse collections, sparse operators, Sawyer testing and a norm oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy import sparse as sp

from .grid import DyadicCube, GridError, WeightGrid, broadcast_level, level_averages, level_orlicz

__all__ = [
    "SparseCollection",
    "SparseOperator",
    "NotSparse",
    "NormEstimate",
    "verify_sparse",
    "split_sparse",
    "split_modulus",
    "apply_sparse",
    "testing_constant",
    "testing_terms",
    "norm_oracle",
    "dense_norm_p2",
    "orlicz_maximal",
    "weighted_maximal",
    "branch_chain",
]


class NotSparse(ValueError):
    """The collection fails the required sparseness fraction."""


def _as_fraction(theta) -> Fraction:
    return theta if isinstance(theta, Fraction) else Fraction(theta)


def _tree_parents(cubes: Iterable[DyadicCube]) -> dict[DyadicCube, DyadicCube | None]:
    """Nearest strict ancestor inside the family, or None for maximal members."""
    members = set(cubes)
    parents = {}
    for Q in members:
        parent = None
        for level in range(Q.level - 1, -1, -1):
            A = Q.ancestor(level)
            if A in members:
                parent = A
                break
        parents[Q] = parent
    return parents


def verify_sparse(cubes, theta) -> tuple[bool, DyadicCube | None, Fraction]:
    """Check |union of strict sub-members of Q| <= theta |Q| for every member.

    Dyadic cubes are nested or disjoint, so the union is the disjoint union of
    the maximal strict sub-members and its measure is an exact dyadic rational.
    Returns (pass, worst cube, worst fraction).
    """
    cubes = list(cubes)
    if not cubes:
        return True, None, Fraction(0)
    dims = {Q.d for Q in cubes}
    if len(dims) != 1:
        raise GridError("cubes live in different dimensions")
    theta = _as_fraction(theta)
    parents = _tree_parents(cubes)
    covered: dict[DyadicCube, Fraction] = {Q: Fraction(0) for Q in parents}
    for Q, parent in parents.items():
        if parent is not None:
            covered[parent] += Fraction(1, 1 << ((Q.level - parent.level) * Q.d))
    worst = max(sorted(covered), key=lambda Q: covered[Q])
    frac = covered[worst]
    return frac <= theta, worst, frac


@dataclass(frozen=True)
class SparseCollection:
    """A finite family of dyadic cubes together with its verified sparseness."""

    cubes: tuple[DyadicCube, ...]
    theta: Fraction
    verified: bool
    worst_fraction: Fraction = Fraction(0)

    @classmethod
    def build(cls, cubes, theta=Fraction(1, 2), strict: bool = True) -> "SparseCollection":
        cubes = tuple(sorted(set(cubes)))
        if not cubes:
            raise ValueError("empty collection")
        ok, worst, frac = verify_sparse(cubes, theta)
        if strict and not ok:
            raise NotSparse(f"cube {worst} has fraction {frac} > {theta}")
        return cls(cubes, _as_fraction(theta), ok, frac)

    @property
    def d(self) -> int:
        return self.cubes[0].d

    def __len__(self) -> int:
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def __contains__(self, Q) -> bool:
        return Q in self.index

    @cached_property
    def index(self) -> dict[DyadicCube, int]:
        return {Q: k for k, Q in enumerate(self.cubes)}

    @cached_property
    def parents(self) -> dict[DyadicCube, DyadicCube | None]:
        return _tree_parents(self.cubes)

    @cached_property
    def children(self) -> dict[DyadicCube, list[DyadicCube]]:
        out: dict[DyadicCube, list[DyadicCube]] = {Q: [] for Q in self.cubes}
        for Q in self.cubes:
            parent = self.parents[Q]
            if parent is not None:
                out[parent].append(Q)
        return out

    @cached_property
    def generation(self) -> dict[DyadicCube, int]:
        """k with Q in the k-th layer of maximal strict sub-members."""
        gen: dict[DyadicCube, int] = {}
        for Q in self.cubes:  # sorted by level, so parents come first
            parent = self.parents[Q]
            gen[Q] = 0 if parent is None else gen[parent] + 1
        return gen

    @property
    def roots(self) -> list[DyadicCube]:
        return [Q for Q in self.cubes if self.parents[Q] is None]

    @property
    def root(self) -> DyadicCube | None:
        roots = self.roots
        return roots[0] if len(roots) == 1 else None

    def descendants(self, Q: DyadicCube) -> list[DyadicCube]:
        """Members contained in Q, Q included."""
        return [R for R in self.cubes if Q.contains(R)]

    def with_cubes(self, cubes, strict: bool = True) -> "SparseCollection":
        return SparseCollection.build(cubes, self.theta, strict)

    def to_list(self) -> list[list[int]]:
        return [[Q.level, *Q.index] for Q in self.cubes]

    @classmethod
    def from_list(cls, rows, theta=Fraction(1, 2), strict: bool = True) -> "SparseCollection":
        cubes = []
        for row in rows:
            if len(row) < 2:
                raise ValueError(f"cube entry {row!r} needs a level and an index")
            cubes.append(DyadicCube(int(row[0]), tuple(int(i) for i in row[1:])))
        return cls.build(cubes, theta, strict)


def branch_chain(d: int, depth: int, corner: int = 0) -> list[DyadicCube]:
    """Root and its nested corner descendants down to ``depth``: 1/2^d-sparse."""
    out = [DyadicCube.root(d)]
    for _ in range(depth):
        out.append(out[-1].children()[corner])
    return out


def split_modulus(p: float) -> int:
    """m = ceil(p log2 10): 2^{-m} <= 10^{-p}."""
    return math.ceil(p * math.log2(10.0))


def _split_threshold(p: float) -> Fraction:
    if float(p).is_integer():
        return Fraction(1, 10 ** int(p))
    return Fraction(10.0 ** (-p))


def split_sparse(collection: SparseCollection, p: float) -> list[SparseCollection]:
    """Partition a 1/2-sparse family by generation mod m into 10^{-p}-sparse parts.

    Inside one part the strict sub-members of Q start m generations down, and
    each generation of a 1/2-sparse family covers at most half of the previous
    one, so they cover at most 2^{-m} |Q| <= 10^{-p} |Q|.
    """
    ok, worst, frac = verify_sparse(collection.cubes, Fraction(1, 2))
    if not ok:
        raise NotSparse(f"input is not 1/2-sparse: {worst} has fraction {frac}")
    m = split_modulus(p)
    theta = _split_threshold(p)
    buckets: dict[int, list[DyadicCube]] = {}
    for Q in collection.cubes:
        buckets.setdefault(collection.generation[Q] % m, []).append(Q)
    return [SparseCollection.build(buckets[r], theta) for r in sorted(buckets)]


# ---------------------------------------------------------------------------
# operators


class SparseOperator:
    """f -> sum_Q <f>_Q 1_Q on the cells of a depth-L grid."""

    def __init__(self, collection: SparseCollection, L: int):
        self.collection = collection
        self.d = collection.d
        self.L = L
        if max(Q.level for Q in collection.cubes) > L:
            raise GridError("collection is finer than the grid")
        self.shape = (1 << L,) * self.d
        self.n_cells = (1 << L) ** self.d
        self.cell_measure = 2.0 ** (-L * self.d)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """E[q, c] = 1 when cell c lies in the q-th cube."""
        rows, cols = [], []
        grid = np.arange(self.n_cells).reshape(self.shape)
        for q, Q in enumerate(self.collection.cubes):
            cells = grid[Q.slices(self.L)].ravel()
            rows.append(np.full(cells.size, q))
            cols.append(cells)
        data = np.ones(sum(r.size for r in rows))
        return sp.csr_matrix(
            (data, (np.concatenate(rows), np.concatenate(cols))), shape=(len(self.collection), self.n_cells)
        )

    @cached_property
    def cells_per_cube(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=1)).ravel()

    @cached_property
    def measures(self) -> np.ndarray:
        return self.cells_per_cube * self.cell_measure

    @cached_property
    def descendant(self) -> sp.csr_matrix:
        """D[a, b] = 1 when the b-th cube is contained in the a-th."""
        coll = self.collection
        rows, cols = [], []
        for b, Q in enumerate(coll.cubes):
            R = Q
            while R is not None:
                rows.append(coll.index[R])
                cols.append(b)
                R = coll.parents[R]
        n = len(coll)
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    def averages(self, f) -> np.ndarray:
        """<f>_Q for every member cube."""
        flat = np.asarray(f, dtype=float).reshape(self.n_cells)
        return (self.incidence @ flat) / self.cells_per_cube

    @cached_property
    def _kernel(self):
        if self.n_cells <= 4096:
            return self.dense()
        E = self.incidence
        return (E.T.tocsr(), sp.diags(1.0 / self.cells_per_cube) @ E)

    def _apply_flat(self, F: np.ndarray) -> np.ndarray:
        K = self._kernel
        if isinstance(K, tuple):
            return K[0] @ (K[1] @ F)
        return K @ F

    def __call__(self, f) -> np.ndarray:
        flat = np.asarray(f, dtype=float).reshape(self.n_cells, 1)
        return np.asarray(self._apply_flat(flat)).reshape(self.shape)

    def dense(self) -> np.ndarray:
        """K with (T f)_c = sum_c' K[c, c'] f_c'."""
        E = self.incidence.toarray()
        return E.T @ (E / self.cells_per_cube[:, None])


def _grid_cells(f, op: SparseOperator) -> np.ndarray:
    arr = f.cells if isinstance(f, WeightGrid) else np.asarray(f, dtype=float)
    if arr.size != op.n_cells:
        raise GridError("function and operator live on different grids")
    return arr.reshape(op.n_cells)


def _check_pair(op: SparseOperator, *weights: WeightGrid):
    for wt in weights:
        if (wt.d, wt.L) != (op.d, op.L):
            raise GridError("weight and operator live on different grids")


def apply_sparse(T: SparseOperator, sigma: WeightGrid, f) -> np.ndarray:
    """T_sigma f = sum_Q <sigma f>_Q 1_Q on the finest cells."""
    _check_pair(T, sigma)
    return T(_grid_cells(f, T) * sigma.cells.ravel())


def testing_terms(T: SparseOperator, sigma: WeightGrid, w: WeightGrid, p: float) -> np.ndarray:
    """[int_{Q0} (sum_{Q in Q0} <sigma>_Q 1_Q)^p dw / sigma(Q0)]^{1/p} per member Q0."""
    _check_pair(T, sigma, w)
    s = sigma.cells.ravel()
    wc = w.cells.ravel()
    avg = (T.incidence @ s) / T.cells_per_cube
    # row a: sum over descendants b of <sigma>_b 1_{Q_b}
    local = (T.descendant @ sp.diags(avg) @ T.incidence).tocsr()
    powered = local.power(p)
    integrals = np.asarray(powered @ wc).ravel() * T.cell_measure
    masses = (T.incidence @ s) * T.cell_measure
    out = np.zeros(len(masses))
    pos = masses > 0
    out[pos] = (integrals[pos] / masses[pos]) ** (1.0 / p)
    return out


def testing_constant(T: SparseOperator, sigma: WeightGrid, w: WeightGrid, p: float) -> float:
    """Largest of the two Sawyer testing families, (sigma, w, p) and (w, sigma, p')."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    pp = p / (p - 1.0)
    a = testing_terms(T, sigma, w, p)
    b = testing_terms(T, w, sigma, pp)
    return float(max(a.max(initial=0.0), b.max(initial=0.0)))


# ---------------------------------------------------------------------------
# norm oracle


@dataclass
class NormEstimate:
    """A feasible lower bound for the norm of T_sigma: L^p(sigma) -> L^p(w)."""

    value: float
    f: np.ndarray
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)


def _lp_norms(F: np.ndarray, weight: np.ndarray, p: float, mu: float) -> np.ndarray:
    return (np.sum(F**p * weight[:, None], axis=0) * mu) ** (1.0 / p)


def norm_oracle(
    T: SparseOperator,
    sigma: WeightGrid,
    w: WeightGrid,
    p: float,
    restarts: int = 8,
    tol: float = 1e-12,
    max_iter: int = 5000,
    seed: int = 0,
    keep: int = 4,
) -> NormEstimate:
    """Alternating maximization of sum_Q <sigma f>_Q <w g>_Q |Q| over f, g >= 0.

    For fixed f the best g is (T_sigma f)^{p-1} normalized in L^{p'}(w); for
    fixed g the best f is (T_w g)^{p'-1} normalized in L^p(sigma).  Seeds: the
    constant function, every cube indicator on the f side, the dual testing
    functions on the g side and ``restarts`` random positive functions.  All
    seeds are scored after one sweep and the best ``keep`` are iterated until
    the relative gain drops below ``tol``.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    _check_pair(T, sigma, w)
    pp = p / (p - 1.0)
    s = sigma.cells.ravel().astype(float)
    wc = w.cells.ravel().astype(float)
    mu = T.cell_measure
    n = T.n_cells
    if not np.any(s > 0) or not np.any(wc > 0):
        return NormEstimate(0.0, np.zeros(T.shape), True, 0)

    E = T.incidence.toarray().T  # cells x cubes
    rng = np.random.default_rng(seed)
    f_seeds = np.hstack([np.ones((n, 1)), E, rng.uniform(0.1, 1.0, (n, restarts))])
    g_seeds = E

    def normalize_f(F):
        norms = _lp_norms(F, s, p, mu)
        norms[norms == 0] = 1.0
        return F / norms

    def from_g(G):
        return normalize_f(np.maximum(T._apply_flat(wc[:, None] * G), 0.0) ** (pp - 1.0))

    def step(F):
        H = T._apply_flat(s[:, None] * F)
        val = _lp_norms(H, wc, p, mu)
        G = H ** (p - 1.0)
        return val, from_g(G)

    F = np.hstack([normalize_f(f_seeds), from_g(g_seeds)])
    F = F[:, _lp_norms(F, s, p, mu) > 0]
    vals, F_next = step(F)
    order = np.argsort(-vals, kind="stable")[:keep]
    F = F_next[:, order]
    best = float(vals[order[0]])
    best_f = F[:, 0].copy()
    history = [best]
    converged = False
    it = 0
    prev = vals[order]
    for it in range(1, max_iter + 1):
        vals, F_next = step(F)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            best_f = F[:, k].copy()
        history.append(best)
        F = F_next
        if np.all(vals - prev <= tol * np.maximum(vals, 1e-300)):
            converged = True
            break
        prev = vals
    return NormEstimate(best, best_f.reshape(T.shape), converged, it, history)


def dense_norm_p2(T: SparseOperator, sigma: WeightGrid, w: WeightGrid) -> float:
    """Exact L^2(sigma) -> L^2(w) norm: sqrt of the top eigenvalue of
    sqrt(sigma) K W K sqrt(sigma)."""
    _check_pair(T, sigma, w)
    K = T.dense()
    r = np.sqrt(sigma.cells.ravel())
    M = (r[:, None] * K.T) @ (w.cells.ravel()[:, None] * K) * r[None, :]
    M = 0.5 * (M + M.T)
    return float(math.sqrt(max(np.linalg.eigvalsh(M)[-1], 0.0)))


# ---------------------------------------------------------------------------
# maximal functions


def orlicz_maximal(f, A, tol: float = 1e-9) -> np.ndarray:
    """Per cell, the largest Luxembourg average <f>_{A,Q} over dyadic Q containing it."""
    arr = f.cells if isinstance(f, WeightGrid) else np.asarray(f, dtype=float)
    if np.any(arr < 0):
        raise ValueError("maximal functions take nonnegative input")
    d = arr.ndim
    depth = int(round(math.log2(arr.shape[0])))
    out = np.zeros(arr.shape)
    for level in range(depth + 1):
        out = np.maximum(out, broadcast_level(level_orlicz(arr, A, level, tol), level, d, depth))
    return out


def weighted_maximal(f, sigma: WeightGrid) -> np.ndarray:
    """M_sigma f = sup_Q 1_Q <f sigma>_Q, cell by cell."""
    arr = f.cells if isinstance(f, WeightGrid) else np.asarray(f, dtype=float)
    if np.any(arr < 0):
        raise ValueError("maximal functions take nonnegative input")
    prod = arr.reshape(sigma.cells.shape) * sigma.cells
    out = np.zeros(prod.shape)
    for level in range(sigma.L + 1):
        out = np.maximum(out, broadcast_level(level_averages(prod, level), level, sigma.d, sigma.L))
    return out

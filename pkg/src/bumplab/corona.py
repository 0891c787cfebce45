"""Stopping-time corona decomposition of a sparse family and its lemma ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bumps import BumpProfile, EpsilonFunction
from .grid import DyadicCube, GridError, WeightGrid, level_orlicz
from .orlicz import YoungFunction
from .sparse import SparseCollection, _split_threshold

__all__ = [
    "CoronaDecomposition",
    "Stratum",
    "LemmaReport",
    "build_corona",
    "alpha_strata",
    "lemma_report",
    "packing_audit",
    "check_invariants",
    "RootMissing",
    "CoronaSummary",
    "run_corona",
]

THRESHOLD = 10.0


class RootMissing(ValueError):
    """The collection has no designated top cube Q0."""


def _cells_of(f, shape) -> np.ndarray:
    arr = f.cells if isinstance(f, WeightGrid) else np.asarray(f, dtype=float)
    return arr.reshape(shape)


@dataclass
class CoronaDecomposition:
    root: DyadicCube
    members: list[DyadicCube]
    T: list[DyadicCube]
    S: list[DyadicCube]
    ch_T: dict[DyadicCube, list[DyadicCube]]
    ch_S: dict[DyadicCube, list[DyadicCube]]
    q_t: dict[DyadicCube, DyadicCube]
    q_s: dict[DyadicCube, DyadicCube]
    i_T: dict[DyadicCube, int]
    i_S: dict[DyadicCube, int]
    regime: dict[DyadicCube, int]
    w_cond: dict[DyadicCube, bool]
    sigma_cond: dict[DyadicCube, bool]
    w_mass: dict[DyadicCube, float]
    w_sharp: dict[DyadicCube, float]
    g_w_avg: dict[DyadicCube, float]
    sigma_avg: dict[DyadicCube, float]
    w_avg: dict[DyadicCube, float]
    g_T: dict[DyadicCube, np.ndarray]
    p: float
    threshold: float = THRESHOLD

    def regime_counts(self) -> dict[int, int]:
        counts = {1: 0, 2: 0, 3: 0}
        for r in self.regime.values():
            counts[r] += 1
        return counts


def build_corona(
    collection: SparseCollection,
    sigma: WeightGrid,
    w: WeightGrid,
    g,
    p: float,
    root: DyadicCube | None = None,
    threshold: float = THRESHOLD,
) -> CoronaDecomposition:
    """Stopping trees for g (in w-averages) and for sigma, restarted at every T."""
    if (sigma.d, sigma.L) != (w.d, w.L):
        raise GridError("weights live on different grids")
    if root is None:
        root = collection.root
        if root is None:
            raise RootMissing("the collection has several maximal cubes; pass root=")
    if root not in collection:
        raise RootMissing(f"{root} is not a member of the collection")
    gc = _cells_of(g, sigma.cells.shape)
    if np.any(gc < 0):
        raise ValueError("g must be nonnegative")
    L = sigma.L
    members = collection.descendants(root)
    gen = collection.generation
    sigma_avg, w_avg, w_mass, g_avg = {}, {}, {}, {}
    for Q in members:
        sl = Q.slices(L)
        sigma_avg[Q] = float(sigma.cells[sl].mean())
        wq = w.cells[sl]
        w_avg[Q] = float(wq.mean())
        w_mass[Q] = float(wq.sum()) * w.cell_measure
        tot = float(wq.sum())
        g_avg[Q] = float((gc[sl] * wq).sum() / tot) if tot > 0 else 0.0

    kids = collection.children

    def stop(top: DyadicCube, rule) -> list[DyadicCube]:
        found, stack = [], list(reversed(kids[top]))
        while stack:
            Q = stack.pop()
            if rule(Q):
                found.append(Q)
            else:
                stack.extend(reversed(kids[Q]))
        return sorted(found)

    ch_T, T_list, frontier = {}, [root], [root]
    while frontier:
        nxt = []
        for T in frontier:
            ch_T[T] = stop(T, lambda Q, T=T: g_avg[Q] > threshold * g_avg[T])
            nxt.extend(ch_T[T])
        T_list.extend(nxt)
        frontier = nxt
    T_set = set(T_list)

    ch_S, S_list, frontier = {}, [root], [root]
    while frontier:
        nxt = []
        for S in frontier:
            ch_S[S] = stop(S, lambda Q, S=S: sigma_avg[Q] > threshold * sigma_avg[S] or Q in T_set)
            nxt.extend(ch_S[S])
        S_list.extend(nxt)
        frontier = nxt
    S_set = set(S_list)

    q_t, q_s = {}, {}
    for Q in members:  # sorted by level: tree parents first
        parent = collection.parents[Q] if Q != root else None
        q_t[Q] = Q if Q in T_set else q_t[parent]
        q_s[Q] = Q if Q in S_set else q_s[parent]
    i_T = {Q: gen[Q] - gen[q_t[Q]] for Q in members}
    i_S = {Q: gen[Q] - gen[q_s[Q]] for Q in members}

    inv_p = 1.0 / p
    w_cond, s_cond, regime = {}, {}, {}
    for Q in members:
        T, S = q_t[Q], q_s[Q]
        w_cond[Q] = w_avg[Q] ** inv_p < 2.0 ** (2 * i_T[Q]) * w_avg[T] ** inv_p
        s_cond[Q] = sigma_avg[Q] ** inv_p < 2.0 ** (-i_S[Q] / 2.0) * sigma_avg[S] ** inv_p
        regime[Q] = 1 if w_cond[Q] else (2 if s_cond[Q] else 3)

    w_sharp, g_T = {}, {}
    for T in T_list:
        sl = T.slices(L)
        sharp = np.zeros(sigma.cells.shape, dtype=bool)
        sharp[sl] = True
        func = np.zeros(sigma.cells.shape)
        for child in ch_T[T]:
            csl = child.slices(L)
            sharp[csl] = False
            func[csl] = g_avg[child]
        func[sharp] = g_avg[T]
        w_sharp[T] = float(w.cells[sharp].sum()) * w.cell_measure
        g_T[T] = func

    return CoronaDecomposition(
        root, members, T_list, sorted(S_list), ch_T, ch_S, q_t, q_s, i_T, i_S, regime,
        w_cond, s_cond, w_mass, w_sharp, g_avg, sigma_avg, w_avg, g_T, p, threshold,
    )


def check_invariants(dec: CoronaDecomposition) -> dict[str, bool | int]:
    """Structural facts the argument relies on, checked on one decomposition."""
    T_set, S_set = set(dec.T), set(dec.S)
    sharp_failures = sum(1 for T in dec.T if dec.w_sharp[T] < 0.5 * dec.w_mass[T])
    counts = dec.regime_counts()
    return {
        "T_subset_S": T_set <= S_set,
        "sharp_failures": sharp_failures,
        "iS_le_iT": all(dec.i_S[Q] <= dec.i_T[Q] for Q in dec.members),
        "regimes_partition": sum(counts.values()) == len(dec.members) and set(dec.regime) == set(dec.members),
    }


def packing_audit(collection: SparseCollection, p: float) -> tuple[bool, float]:
    """Exact check of sum_{Q' j generations below Q} |Q'| <= 10^{-pj} |Q|.

    Returns (holds, largest fraction / 10^{-pj}).
    """
    theta = _split_threshold(p)
    gen = collection.generation
    below: dict[tuple[DyadicCube, int], Fraction] = {}
    for Q in collection.cubes:
        A = collection.parents[Q]
        while A is not None:
            j = gen[Q] - gen[A]
            key = (A, j)
            below[key] = below.get(key, Fraction(0)) + Fraction(1, 1 << ((Q.level - A.level) * Q.d))
            A = collection.parents[A]
    holds, worst = True, 0.0
    for (A, j), frac in below.items():
        bound = theta**j
        holds &= frac <= bound
        worst = max(worst, float(frac / bound))
    return holds, worst


# ---------------------------------------------------------------------------
# strata


@dataclass
class Stratum:
    """Cubes with psi in (alpha/2, alpha]; ``j`` is None for the psi = 0 stratum."""

    j: int | None
    cubes: list[DyadicCube]
    alpha: float
    psi: dict[DyadicCube, float]

    def spread(self) -> float:
        vals = [self.psi[Q] for Q in self.cubes]
        return max(vals) / min(vals) if vals and min(vals) > 0 else math.nan


def _cube_value(arrays, Q: DyadicCube) -> float:
    return float(arrays[Q.level][Q.flat()])


def alpha_strata(
    collection: SparseCollection,
    sigma: WeightGrid,
    w: WeightGrid,
    A: YoungFunction,
    eps: EpsilonFunction,
    p: float,
    arg_mode: str = "one-plus-rho",
    profile: BumpProfile | None = None,
) -> list[Stratum]:
    """Group cubes by j = floor(log2(psi_max / psi(Q)))."""
    prof = profile or BumpProfile(sigma, w, A, p)
    psi_arrays = prof.psi(eps, arg_mode)
    psi = {Q: _cube_value(psi_arrays, Q) for Q in collection.cubes}
    positive = [v for v in psi.values() if v > 0 and not math.isnan(v)]
    groups: dict[int | None, list[DyadicCube]] = {}
    top = max(positive) if positive else 0.0
    for Q in collection.cubes:
        v = psi[Q]
        if not (v > 0):
            groups.setdefault(None, []).append(Q)
            continue
        j = int(math.floor(math.log2(top / v)))
        # guard the floor against rounding right at a power of two
        if v * 2.0 ** (j + 1) <= top:
            j += 1
        groups.setdefault(j, []).append(Q)
    out = []
    for j in sorted(k for k in groups if k is not None):
        out.append(Stratum(j, groups[j], top * 2.0**-j, {Q: psi[Q] for Q in groups[j]}))
    if None in groups:
        out.append(Stratum(None, groups[None], 0.0, {Q: psi[Q] for Q in groups[None]}))
    return out


# ---------------------------------------------------------------------------
# lemma ratios


@dataclass
class LemmaReport:
    ratios: dict[str, float] = field(default_factory=dict)
    gT_ratio: float = 0.0
    packing_max: float = 0.0
    sum_max: float = 0.0
    decrease_max: float = 0.0
    decrease_pairs: list[tuple[int, float]] = field(default_factory=list)
    zs2w_max: float = 0.0
    swlt_max: float = 0.0
    skipped: int = 0
    regimes: dict[int, int] = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})

    KEYS = ("S", "S1", "S2", "S3", "S3_literal")

    def merge(self, other: "LemmaReport") -> "LemmaReport":
        out = LemmaReport()
        for k in self.KEYS:
            out.ratios[k] = max(self.ratios.get(k, 0.0), other.ratios.get(k, 0.0))
        for name in ("gT_ratio", "packing_max", "sum_max", "decrease_max", "zs2w_max", "swlt_max"):
            setattr(out, name, max(getattr(self, name), getattr(other, name)))
        out.decrease_pairs = self.decrease_pairs + other.decrease_pairs
        out.skipped = self.skipped + other.skipped
        out.regimes = {r: self.regimes[r] + other.regimes[r] for r in (1, 2, 3)}
        return out


def _safe_ratio(num: float, den: float) -> float | None:
    if den > 0:
        return num / den
    return None if num == 0 else math.inf


def lemma_report(
    dec: CoronaDecomposition,
    stratum: Stratum,
    sigma: WeightGrid,
    w: WeightGrid,
    A: YoungFunction,
    eps: EpsilonFunction,
    p: float,
    g=None,
    arg_mode: str = "one-plus-rho",
    profile: BumpProfile | None = None,
    collection: SparseCollection | None = None,
) -> LemmaReport:
    """Measured constants of the basic estimate, its three pieces and the auxiliary bounds."""
    pp = p / (p - 1.0)
    alpha = stratum.alpha
    prof = profile or BumpProfile(sigma, w, A, p)
    L = sigma.L
    root_p = sigma.cells ** (1.0 / p)
    primal = {}
    for Q in dec.members:
        if Q.level not in primal:
            primal[Q.level] = level_orlicz(root_p, A, Q.level)
    prim = {Q: float(primal[Q.level][Q.flat()]) for Q in dec.members}
    rho = {Q: _cube_value(prof.rho, Q) for Q in dec.members}
    measure = {Q: float(Q.measure()) for Q in dec.members}

    def eps_at(Q):
        r = rho[Q]
        return eps(1.0 + r if arg_mode == "one-plus-rho" else r)

    rep = LemmaReport()
    rep.regimes = dec.regime_counts()
    by_T: dict[DyadicCube, list[DyadicCube]] = {T: [] for T in dec.T}
    for Q in dec.members:
        by_T[dec.q_t[Q]].append(Q)

    def bump(Q):
        return dec.sigma_avg[Q] * dec.w_avg[Q] * measure[Q]

    ratios = {k: 0.0 for k in LemmaReport.KEYS}
    for T, cubes in by_T.items():
        core_sum = sum(prim[Q] ** p * measure[Q] for Q in cubes)
        core = core_sum ** (1.0 / p) * dec.w_mass[T] ** (1.0 / pp)
        S_children = [S for S in dec.S if dec.q_t[S] == T]
        core_S2 = sum(prim[S] ** p * measure[S] for S in S_children) ** (1.0 / p) * dec.w_mass[T] ** (1.0 / pp)
        literal = sum(prim[Q] * measure[Q] for Q in cubes) ** (1.0 / p) * dec.w_mass[T] ** (1.0 / p)
        lhs = {
            "S": sum(bump(Q) for Q in cubes),
            "S1": sum(bump(Q) for Q in cubes if dec.w_cond[Q]),
            # summation over Q with Q^s = S, S^t = T; such Q satisfy Q^t = T
            "S2": sum(bump(Q) for Q in cubes if dec.sigma_cond[Q]),
            "S3": sum(bump(Q) for Q in cubes if dec.regime[Q] == 3),
        }
        lhs["S3_literal"] = lhs["S3"]
        dens = {"S": core, "S1": core, "S2": core_S2, "S3": core, "S3_literal": literal}
        for k in LemmaReport.KEYS:
            r = _safe_ratio(lhs[k], alpha * dens[k])
            if r is None:
                continue
            if math.isinf(r):
                rep.skipped += 1
                continue
            ratios[k] = max(ratios[k], r)
    rep.ratios = ratios

    # quasi-orthogonality of the stopping averages
    gc = _cells_of(g, sigma.cells.shape) if g is not None else None
    if gc is not None:
        sl = dec.root.slices(L)
        norm = float((gc[sl] ** pp * w.cells[sl]).sum()) * w.cell_measure
        top = sum(dec.g_w_avg[T] ** pp * dec.w_mass[T] for T in dec.T)
        rep.gT_ratio = top / norm if norm > 0 else 0.0

    if collection is not None:
        rep.packing_max = packing_audit(collection, p)[1]

    # pointwise sum of eps^{-p'} over regime-3 cubes, one T at a time
    for T, cubes in by_T.items():
        acc = np.zeros(sigma.cells.shape)
        for Q in cubes:
            if dec.regime[Q] == 3 and not math.isnan(rho[Q]):
                acc[Q.slices(L)] += eps_at(Q) ** (-pp)
        rep.sum_max = max(rep.sum_max, float(acc.max()))

    for Q in dec.members:
        T = dec.q_t[Q]
        if dec.regime[Q] == 3 and rho[T] > 0 and not math.isnan(rho[Q]):
            r = rho[Q] / rho[T]
            rep.decrease_pairs.append((dec.i_T[Q], r))
            rep.decrease_max = max(rep.decrease_max, r * 2.0 ** (dec.i_T[Q] / 2.0))

    for Q in dec.members:
        if math.isnan(rho[Q]) or alpha <= 0:
            continue
        den = alpha * prim[Q] * dec.w_avg[Q] ** (1.0 / pp)
        r = _safe_ratio(dec.sigma_avg[Q] * dec.w_avg[Q], den)
        if r is not None and not math.isinf(r):
            rep.zs2w_max = max(rep.zs2w_max, r)
        den = alpha**p * eps_at(Q) ** (-p) * prim[Q] ** p
        r = _safe_ratio(dec.sigma_avg[Q] ** p * dec.w_avg[Q], den)
        if r is not None and not math.isinf(r):
            rep.swlt_max = max(rep.swlt_max, r)
    return rep


@dataclass
class CoronaSummary:
    """Aggregate over the split parts, strata and maximal cubes of one family."""

    report: LemmaReport
    invariants: dict[str, bool | int]
    parts: int
    strata: int
    trees: int


def run_corona(
    collection: SparseCollection,
    sigma: WeightGrid,
    w: WeightGrid,
    A: YoungFunction,
    eps: EpsilonFunction,
    p: float,
    g,
    arg_mode: str = "one-plus-rho",
    threshold: float = THRESHOLD,
) -> CoronaSummary:
    """Split to 10^{-p}-sparseness, stratify by psi, and decompose every block."""
    from .sparse import split_sparse

    prof = BumpProfile(sigma, w, A, p)
    parts = split_sparse(collection, p)
    total = LemmaReport()
    inv = {"T_subset_S": True, "sharp_failures": 0, "iS_le_iT": True, "regimes_partition": True, "packing": True}
    n_strata = n_trees = 0
    for part in parts:
        holds, worst = packing_audit(part, p)
        inv["packing"] &= holds
        total.packing_max = max(total.packing_max, worst)
        for stratum in alpha_strata(part, sigma, w, A, eps, p, arg_mode, prof):
            if stratum.j is None:
                total.skipped += len(stratum.cubes)
                continue
            n_strata += 1
            sub = SparseCollection.build(stratum.cubes, part.theta)
            for top in sub.roots:
                dec = build_corona(sub, sigma, w, g, p, root=top, threshold=threshold)
                n_trees += 1
                checks = check_invariants(dec)
                for key in ("T_subset_S", "iS_le_iT", "regimes_partition"):
                    inv[key] &= checks[key]
                inv["sharp_failures"] += checks["sharp_failures"]
                rep = lemma_report(dec, stratum, sigma, w, A, eps, p, g, arg_mode, prof)
                total = total.merge(rep)
    return CoronaSummary(total, inv, len(parts), n_strata, n_trees)

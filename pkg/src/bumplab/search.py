"""Random weight pairs and simulated annealing on norm-to-bump ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .bumps import BumpProfile, EpsilonFunction, normalize_epsilon
from .grid import DyadicCube, WeightGrid
from .orlicz import YoungFunction, log_bump
from .sparse import SparseCollection, SparseOperator, norm_oracle, verify_sparse

__all__ = [
    "Instance",
    "Objective",
    "KINDS",
    "OBJECTIVES",
    "Schedule",
    "SearchResult",
    "generate_instance",
    "default_family",
    "evaluate",
    "constants",
    "Constants",
    "apply_move",
    "candidate_moves",
    "scan_neighborhood",
    "local_search",
]

KINDS = ("lognormal", "power-spike", "lacunary")
OBJECTIVES = ("theorem-ratio", "conjecture-ratio")
FACTORS = (2.0, 0.5, 10.0, 0.1)


@dataclass(frozen=True, eq=False)
class Instance:
    """A weight pair with its sparse family and the bump data of the theorem."""

    sigma: WeightGrid
    w: WeightGrid
    collection: SparseCollection
    p: float
    A: YoungFunction
    B: YoungFunction
    eps_p: EpsilonFunction
    eps_pp: EpsilonFunction
    seed: int = 0
    kind: str = "custom"

    def __post_init__(self):
        if (self.sigma.d, self.sigma.L) != (self.w.d, self.w.L):
            raise ValueError("sigma and w live on different grids")
        if not self.collection.verified:
            raise ValueError("sparse family is not verified")
        if self.collection.d != self.sigma.d:
            raise ValueError("sparse family and weights have different dimensions")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def d(self) -> int:
        return self.sigma.d

    @property
    def L(self) -> int:
        return self.sigma.L

    def same_as(self, other: "Instance") -> bool:
        return (
            self.sigma == other.sigma
            and self.w == other.w
            and self.collection.cubes == other.collection.cubes
            and self.p == other.p
            and self.A == other.A
            and self.B == other.B
            and self.eps_p == other.eps_p
            and self.eps_pp == other.eps_pp
            and self.seed == other.seed
        )


def default_family(p: float, eta: float = 1.0):
    """Log bumps A in B_p and B in B_{p'} with the same eta, power-family eps.

    eps_p = c t^{eta/(2p')} is normalized against p' and eps_{p'} = c t^{eta/(2p)}
    against p.
    """
    pp = p / (p - 1.0)
    A = log_bump(p, eta)
    B = log_bump(pp, eta)
    eps_p = normalize_epsilon("power", eta / (2.0 * pp), pp)
    eps_pp = normalize_epsilon("power", eta / (2.0 * p), p)
    return A, B, eps_p, eps_pp


# ---------------------------------------------------------------------------
# generation


def _cell_centers(d: int, L: int) -> np.ndarray:
    n = 1 << L
    axes = [(np.arange(n) + 0.5) / n] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _power_spike(rng, d, L, a):
    x0 = rng.uniform(0, 1, d)
    dist = np.linalg.norm(_cell_centers(d, L) - x0, axis=-1)
    dist = np.maximum(dist, 2.0 ** (-L - 1))
    return dist**a


def _branch(rng, d: int, L: int) -> list[DyadicCube]:
    cube, out = DyadicCube.root(d), [DyadicCube.root(d)]
    for _ in range(L):
        cube = cube.children()[int(rng.integers(0, 1 << d))]
        out.append(cube)
    return out


def _lacunary(rng, d, L, ratio):
    branch = _branch(rng, d, L)
    cells = np.ones((1 << L,) * d)
    for k, Q in enumerate(branch):
        cells[Q.slices(L)] = ratio**k
    return cells


def _random_family(rng, d: int, L: int, extra: int | None = None) -> SparseCollection:
    """A chain along one random branch plus random cubes that keep 1/2-sparseness.

    In one dimension the chain steps two levels at a time: a chain through
    every level already covers half of each member and admits nothing else.
    """
    step = 2 if d == 1 else 1
    branch = _branch(rng, d, L)
    cubes = set(branch[::step])
    tries = extra if extra is not None else 4 * L
    for _ in range(tries):
        level = int(rng.integers(1, L + 1))
        Q = DyadicCube(level, tuple(int(i) for i in rng.integers(0, 1 << level, d)))
        if Q in cubes:
            continue
        if verify_sparse(cubes | {Q}, Fraction(1, 2))[0]:
            cubes.add(Q)
    return SparseCollection.build(cubes)


def generate_instance(
    kind: str,
    d: int,
    L: int,
    p: float,
    seed: int,
    s: float = 1.0,
    a: float | None = None,
    b: float | None = None,
    ratio: float | None = None,
    eta: float = 1.0,
) -> Instance:
    """Seeded weight pair of the given kind on the depth-L grid of [0,1)^d.

    lognormal: independent exp(N(0, s^2)) cells.  power-spike: |x - x0|^a for
    sigma and |x - x1|^b for w (exponents drawn in (-d/2, d/2) unless given).
    lacunary: values ratio^k on the k-th cube of a random branch.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    rng = np.random.default_rng(seed)
    shape = (1 << L,) * d
    if kind == "lognormal":
        sig = np.exp(rng.normal(0.0, 1.0, shape) * s)
        wt = np.exp(rng.normal(0.0, 1.0, shape) * s)
    elif kind == "power-spike":
        ea = a if a is not None else float(rng.uniform(-0.5, 0.5) * d)
        eb = b if b is not None else float(rng.uniform(-0.5, 0.5) * d)
        sig = _power_spike(rng, d, L, ea)
        wt = _power_spike(rng, d, L, eb)
    else:
        r1 = ratio if ratio is not None else float(rng.uniform(1.5, 4.0))
        r2 = ratio if ratio is not None else float(rng.uniform(1.5, 4.0))
        sig = _lacunary(rng, d, L, r1)
        wt = _lacunary(rng, d, L, 1.0 / r2)
    family = _random_family(rng, d, L)
    A, B, eps_p, eps_pp = default_family(p, eta)
    return Instance(WeightGrid(d, L, sig), WeightGrid(d, L, wt), family, float(p), A, B, eps_p, eps_pp, seed, kind)


# ---------------------------------------------------------------------------
# objectives


@dataclass(frozen=True)
class Objective:
    kind: str
    value: float
    norm: float
    denominator: float
    finite: bool


@dataclass(frozen=True)
class Constants:
    norm: float
    entangled_sw: float
    entangled_ws: float
    separated_sw: float
    separated_ws: float

    def objective(self, kind: str) -> Objective:
        if kind == "theorem-ratio":
            den = self.entangled_sw + self.entangled_ws
        elif kind == "conjecture-ratio":
            den = self.separated_sw + self.separated_ws
        else:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not (den > 0) or not math.isfinite(den):
            return Objective(kind, math.inf, self.norm, den, False)
        return Objective(kind, self.norm / den, self.norm, den, True)


def constants(inst: Instance, arg_mode: str = "one-plus-rho") -> Constants:
    """Norm estimate and the four bump constants of an instance."""
    T = SparseOperator(inst.collection, inst.L)
    est = norm_oracle(T, inst.sigma, inst.w, inst.p)
    fwd = BumpProfile(inst.sigma, inst.w, inst.A, inst.p)
    bwd = BumpProfile(inst.w, inst.sigma, inst.B, inst.p_prime)
    return Constants(
        est.value,
        fwd.entangled(inst.eps_p, arg_mode),
        bwd.entangled(inst.eps_pp, arg_mode),
        fwd.separated(),
        bwd.separated(),
    )


def evaluate(inst: Instance, kind: str = "theorem-ratio", arg_mode: str = "one-plus-rho") -> Objective:
    return constants(inst, arg_mode).objective(kind)


# ---------------------------------------------------------------------------
# moves


def apply_move(inst: Instance, move: tuple) -> Instance | None:
    """Instance after one move; None when a toggle would break sparseness or drop the root."""
    what = move[0]
    if what in ("sigma", "w"):
        _, cell, factor = move
        grid = inst.sigma if what == "sigma" else inst.w
        cells = grid.cells.copy().ravel()
        cells[cell] *= factor
        new = grid.with_cells(cells)
        return replace(inst, sigma=new) if what == "sigma" else replace(inst, w=new)
    if what == "toggle":
        Q = DyadicCube(move[1], tuple(move[2:]))
        cubes = set(inst.collection.cubes)
        if Q in cubes:
            if Q.level == 0:
                return None
            cubes.remove(Q)
        else:
            cubes.add(Q)
        ok, _, _ = verify_sparse(cubes, Fraction(1, 2))
        if not ok:
            return None
        return replace(inst, collection=SparseCollection.build(cubes))
    raise ValueError(f"unknown move {move!r}")


def candidate_moves(inst: Instance) -> list[tuple]:
    """Every single-cell perturbation and every cube toggle, in a fixed order."""
    moves = []
    for what in ("sigma", "w"):
        for cell in range(inst.sigma.n_cells):
            for factor in FACTORS:
                moves.append((what, cell, factor))
    for level in range(1, inst.L + 1):
        for k in range((1 << level) ** inst.d):
            Q = DyadicCube.from_flat(level, k, inst.d)
            moves.append(("toggle", level, *Q.index))
    return moves


def _random_move(rng, inst: Instance) -> tuple:
    if rng.random() < 0.8:
        what = "sigma" if rng.random() < 0.5 else "w"
        return (what, int(rng.integers(0, inst.sigma.n_cells)), FACTORS[int(rng.integers(0, len(FACTORS)))])
    level = int(rng.integers(1, inst.L + 1))
    return ("toggle", level, *(int(i) for i in rng.integers(0, 1 << level, inst.d)))


def scan_neighborhood(inst: Instance, kind: str = "theorem-ratio", arg_mode: str = "one-plus-rho"):
    """Best admissible one-step move by exhaustive evaluation: (move, objective)."""
    best_move, best = None, None
    for move in candidate_moves(inst):
        nxt = apply_move(inst, move)
        if nxt is None:
            continue
        obj = evaluate(nxt, kind, arg_mode)
        if not obj.finite:
            continue
        if best is None or obj.value > best.value:
            best_move, best = move, obj
    return best_move, best


# ---------------------------------------------------------------------------
# annealing


@dataclass(frozen=True)
class Schedule:
    """Geometric cooling from T0 to T0 * final_ratio.

    ``T0`` None calibrates it so that a median-size deterioration among
    ``probe`` random moves is accepted with probability ``accept0``.
    """

    T0: float | None = None
    accept0: float = 0.3
    final_ratio: float = 1e-3
    probe: int = 16


@dataclass
class SearchResult:
    best: Instance
    best_value: float
    trace: list[dict] = field(default_factory=list)
    rejected: int = 0
    start_value: float = math.nan


def local_search(
    start: Instance,
    objective: str = "theorem-ratio",
    steps: int = 100,
    schedule: Schedule | None = None,
    seed: int = 0,
    mode: str = "anneal",
    arg_mode: str = "one-plus-rho",
) -> SearchResult:
    """Maximize the objective by single-cell rescalings and sparse-family toggles.

    ``mode="steepest"`` takes the best move of the full neighborhood at each
    step (stopping at a local maximum); ``"anneal"`` draws random moves and
    accepts by the Metropolis rule.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    schedule = schedule or Schedule()
    rng = np.random.default_rng(seed)
    cur = start
    cur_val = evaluate(cur, objective, arg_mode).value
    result = SearchResult(cur, cur_val, [], 0, cur_val)
    if steps <= 0:
        return result

    if mode == "steepest":
        for step in range(steps):
            move, obj = scan_neighborhood(cur, objective, arg_mode)
            if obj is None or obj.value <= cur_val:
                break
            cur, cur_val = apply_move(cur, move), obj.value
            result.best, result.best_value = cur, cur_val
            result.trace.append({"step": step, "move": move, "value": cur_val, "best": cur_val, "accepted": True})
        return result
    if mode != "anneal":
        raise ValueError("mode must be 'anneal' or 'steepest'")

    T0 = schedule.T0
    if T0 is None:
        drops = []
        for _ in range(schedule.probe):
            nxt = apply_move(cur, _random_move(rng, cur))
            if nxt is None:
                continue
            obj = evaluate(nxt, objective, arg_mode)
            if obj.finite and obj.value < cur_val:
                drops.append(cur_val - obj.value)
        median = float(np.median(drops)) if drops else 0.1 * max(cur_val, 1e-12)
        T0 = median / math.log(1.0 / schedule.accept0)
    cooling = schedule.final_ratio ** (1.0 / max(steps, 1))
    temp = T0
    for step in range(steps):
        move = _random_move(rng, cur)
        nxt = apply_move(cur, move)
        accepted = False
        value = math.nan
        if nxt is not None:
            obj = evaluate(nxt, objective, arg_mode)
            if not obj.finite:
                result.rejected += 1
            else:
                value = obj.value
                delta = value - cur_val
                if delta >= 0 or rng.random() < math.exp(delta / temp):
                    cur, cur_val, accepted = nxt, value, True
                    if value > result.best_value:
                        result.best, result.best_value = nxt, value
        result.trace.append(
            {"step": step, "move": move, "value": value, "current": cur_val, "best": result.best_value, "accepted": accepted}
        )
        temp *= cooling
    return result

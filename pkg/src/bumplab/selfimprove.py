"""Distribution-function Orlicz averages, weak concavity and self-improving bumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bumps import BumpProfile, EpsilonFunction, epsilon_integral, normalize_epsilon
from .grid import DyadicCube, GridError, WeightGrid, cube_samples, level_orlicz
from .orlicz import Log, YoungFunction, dual_young, log_bump, loglog_bump, luxembourg_norm

__all__ = [
    "BetaFactor",
    "distribution",
    "distinct_steps",
    "orlicz_via_distribution",
    "weak_concavity_check",
    "self_improve_check",
    "proposition_eta",
    "PropositionReport",
    "CASES",
]

CASES = ("log", "loglog")


@dataclass(frozen=True)
class BetaFactor:
    """Slowly varying factors beta and theta for one case of the bump recipe.

    log:    beta(u) = (Log u)^{1/(p-1)+eta},            theta(u) = (1+u)^{-eta/2}
    loglog: beta(u) = (Log u)^{1/(p-1)} (Log Log u)^{1/(p-1)+eta/2},
            theta(u) = (Log u)^{-1-eta'/2}

    B(t) = t beta(t).  B0(t) = B(t) theta(Log t) in the log case and
    B(t) theta(t) in the loglog case.
    """

    case: str
    p: float
    eta: float
    eta_prime: float | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if self.p <= 1 or self.eta <= 0:
            raise ValueError("need p > 1 and eta > 0")

    @property
    def ep(self) -> float:
        return self.eta if self.eta_prime is None else self.eta_prime

    def beta(self, u):
        u = np.asarray(u, dtype=float)
        k = 1.0 / (self.p - 1.0)
        if self.case == "log":
            return Log(u) ** (k + self.eta)
        return Log(u) ** k * Log(Log(u)) ** (k + self.eta / 2.0)

    def theta(self, u):
        u = np.asarray(u, dtype=float)
        if self.case == "log":
            return (1.0 + u) ** (-self.eta / 2.0)
        return Log(u) ** (-1.0 - self.ep / 2.0)

    def beta0(self, u):
        u = np.asarray(u, dtype=float)
        inner = Log(u) if self.case == "log" else u
        return self.beta(u) * self.theta(inner)

    def B(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.beta(t)

    def B0(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.beta0(t)

    def tilde_theta(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.theta(t)


def _cube_values(sigma, Q: DyadicCube | None) -> np.ndarray:
    if isinstance(sigma, WeightGrid):
        Q = Q or DyadicCube.root(sigma.d)
        return cube_samples(sigma.cells, Q, sigma.L)[0]
    arr = np.asarray(sigma, dtype=float)
    if Q is None:
        return arr.ravel()
    return cube_samples(arr, Q)[0]


def distribution(sigma, Q: DyadicCube | None, lam: float) -> float:
    """D_Q(lam) = |{x in Q : sigma(x) > lam}| / |Q|, by counting cells."""
    vals = _cube_values(sigma, Q)
    return int(np.count_nonzero(vals > lam)) / vals.size


def distinct_steps(sigma, Q: DyadicCube | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distinct positive values v_1 < ... < v_k and D on [v_{i-1}, v_i)."""
    vals = np.sort(_cube_values(sigma, Q))
    levels = np.unique(vals[vals > 0])
    # number of cells >= v_i equals the number > lam for lam in [v_{i-1}, v_i)
    above = vals.size - np.searchsorted(vals, levels, side="left")
    return levels, above / vals.size


def orlicz_via_distribution(sigma, Q: DyadicCube | None, beta: Callable) -> float:
    """int_0^oo D_Q(lam) beta(1 / D_Q(lam)) dlam as an exact sum over the steps of D_Q."""
    levels, D = distinct_steps(sigma, Q)
    if levels.size == 0:
        return 0.0
    widths = np.diff(np.concatenate([[0.0], levels]))
    return float(np.sum(widths * D * np.asarray(beta(1.0 / D), dtype=float)))


def weak_concavity_check(
    f: Callable,
    interval: tuple[float, float],
    trials: int = 10_000,
    max_points: int = 8,
    cap: float = 2.0,
    seed: int = 0,
) -> tuple[bool, float]:
    """Smallest C with f(sum l_j x_j) >= C^{-1} sum l_j f(x_j) over random combinations.

    Points are drawn half uniformly and half log-uniformly on the interval (the
    latter only when it is positive), weights from a flat Dirichlet law.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError("empty interval")
    rng = np.random.default_rng(seed)
    worst = 1.0
    for _ in range(trials):
        n = int(rng.integers(2, max_points + 1))
        if lo > 0 and rng.random() < 0.5:
            x = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
        else:
            x = rng.uniform(lo, hi, n)
        lam = rng.dirichlet(np.ones(n))
        mean_f = float(np.dot(lam, np.asarray(f(x), dtype=float)))
        f_mean = float(f(float(np.dot(lam, x))))
        if f_mean > 0:
            worst = max(worst, mean_f / f_mean)
        elif mean_f > 0:
            worst = math.inf
    return worst <= cap, worst


def self_improve_check(sigma, Q: DyadicCube | None, factor: BetaFactor) -> tuple[float, float, float] | None:
    """(lhs, rhs, lhs/rhs) with lhs = <sigma>_{B0,Q} and rhs = <sigma>_{B,Q} theta(<sigma>_{B,Q}/<sigma>_Q).

    Both Orlicz averages are evaluated through the distribution function.
    Returns None when <sigma>_Q = 0.
    """
    vals = _cube_values(sigma, Q)
    mean = float(vals.mean())
    if mean == 0.0:
        return None
    lhs = orlicz_via_distribution(vals, None, factor.beta0)
    big = orlicz_via_distribution(vals, None, factor.beta)
    rhs = big * float(factor.theta(big / mean))
    return lhs, rhs, lhs / rhs


# ---------------------------------------------------------------------------


@dataclass
class PropositionReport:
    case: str
    p: float
    eta: float
    eta_prime: float
    A: YoungFunction
    A0: YoungFunction
    eps: EpsilonFunction
    separated: float
    entangled: float
    ratio: float
    chain_max: float
    theta_identity_err: float
    theta_ratio_max: float
    finite_integral: float
    skipped: int
    extra: dict = field(default_factory=dict)


def _recipe(case: str, p: float, eta: float, eta_prime: float):
    pp = p / (p - 1.0)
    if case == "log":
        return log_bump(p, eta), log_bump(p, eta / 2.0), normalize_epsilon("power", eta / (2.0 * pp), pp)
    if case == "loglog":
        A = loglog_bump(p, 1.0 + eta)
        A0 = loglog_bump(p, eta / 2.0)
        return A, A0, normalize_epsilon("log-power", (1.0 + eta_prime) / pp, pp)
    raise ValueError(f"case must be one of {CASES}")


def proposition_eta(
    sigma: WeightGrid,
    w: WeightGrid,
    p: float,
    eta: float,
    case: str = "log",
    eta_prime: float | None = None,
    arg_mode: str = "one-plus-rho",
    tol: float = 1e-9,
) -> PropositionReport:
    """Separated constant of the big bump against the entangled constant of the smaller one."""
    if (sigma.d, sigma.L) != (w.d, w.L):
        raise GridError("weights live on different grids")
    ep = eta if eta_prime is None else float(eta_prime)
    pp = p / (p - 1.0)
    A, A0, eps = _recipe(case, p, eta, ep)
    big = BumpProfile(sigma, w, A, p, tol)
    small = BumpProfile(sigma, w, A0, p, tol)
    sep = big.separated()
    ent = small.entangled(eps, arg_mode)

    chain = 0.0
    for r, o_small, o_big in zip(small.rho, small.sigma_orlicz, big.sigma_orlicz):
        ok = ~np.isnan(r) & (o_big > 0)
        if np.any(ok):
            arg = 1.0 + r[ok] if arg_mode == "one-plus-rho" else r[ok]
            chain = max(chain, float(np.max(eps(arg) * o_small[ok] / o_big[ok])))

    # <sigma^{1/p'}>_{dual(A0),Q}^{p'} equals <sigma>_{B0,Q} with B0(u) = dual(A0)(u^{1/p'})
    A0bar = dual_young(A0)
    Abar = dual_young(A)
    theta_of = BetaFactor(case, p, eta, ep).theta
    err, worst = 0.0, 0.0
    for level in range(sigma.L + 1):
        small_pow = small.sigma_orlicz[level] ** pp
        direct = level_orlicz(sigma.cells, lambda u: A0bar(u ** (1.0 / pp)), level, tol)
        pos = direct > 0
        if np.any(pos):
            err = max(err, float(np.max(np.abs(small_pow[pos] / direct[pos] - 1.0))))
        big_pow = big.sigma_orlicz[level] ** pp
        mean = big.sigma_avg[level]
        ok = mean > 0
        if np.any(ok):
            rhs = big_pow[ok] * theta_of(big_pow[ok] / mean[ok])
            worst = max(worst, float(np.max(small_pow[ok] / rhs)))
    return PropositionReport(
        case, p, eta, ep, A, A0, eps, sep, ent,
        ent / sep if sep > 0 else math.nan,
        chain, err, worst, epsilon_integral(eps), small.skipped,
    )

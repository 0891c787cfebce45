"""Scalar constants of a weight pair: A_p, separated and entangled bumps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .grid import DyadicCube, WeightGrid, cube_samples, level_averages, orlicz_all_levels
from .orlicz import Log, YoungFunction, dual_young, luxembourg_norm

__all__ = [
    "EpsilonFunction",
    "EPSILON_FAMILIES",
    "normalize_epsilon",
    "epsilon_integral",
    "BumpProfile",
    "ap_constant",
    "separated_bump",
    "entangled_bump",
    "rho",
    "ARG_MODES",
]

EPSILON_FAMILIES = ("power", "log-power", "triple-log")
ARG_MODES = ("one-plus-rho", "rho")


class DivergentEpsilon(ValueError):
    """The family is not integrable: int_1^oo eps^{-p'} dt/t = oo."""


def _eps_shape(family: str, param: float, p_prime: float, t):
    t = np.asarray(t, dtype=float)
    if family == "power":
        return t**param
    if family == "log-power":
        return Log(t) ** param
    if family == "triple-log":
        l1 = Log(t)
        l2 = Log(l1)
        l3 = Log(l2)
        return (l1 * l2) ** (1.0 / p_prime) * l3 ** ((1.0 + param) / p_prime)
    raise ValueError(f"unknown epsilon family {family!r}")


@dataclass(frozen=True)
class EpsilonFunction:
    """eps(t) = c * shape(t), monotone on (1, oo) with int_1^oo eps^{-p'} dt/t = 1.

    ``param`` is the exponent a of t^a (power), the exponent b of (Log t)^b
    (log-power), or eta in the triple-log shape.  ``growth_M`` is the
    smallest M with eps(t) <= (Log t)^M on the test grid t = 2^k, k <= 64.
    """

    family: str
    param: float
    c: float
    p_prime: float
    growth_M: float = math.nan

    def __call__(self, t):
        out = self.c * _eps_shape(self.family, self.param, self.p_prime, t)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        key = {"power": "a", "log-power": "b", "triple-log": "eta"}[self.family]
        return {"family": self.family, key: float(self.param)}

    @classmethod
    def from_dict(cls, data: dict, p_prime: float) -> "EpsilonFunction":
        family = data["family"]
        key = {"power": "a", "log-power": "b", "triple-log": "eta"}.get(family)
        if key is None:
            raise ValueError(f"unknown epsilon family {family!r}")
        return normalize_epsilon(family, float(data[key]), p_prime)


def _unit_integral(family: str, param: float, p_prime: float) -> float:
    """int_1^oo shape(t)^{-p'} dt/t."""
    if family == "power":
        if param <= 0:
            raise DivergentEpsilon("t^a with a <= 0 is not integrable")
        return 1.0 / (param * p_prime)
    if family == "log-power":
        s = param * p_prime
        if s <= 1:
            raise DivergentEpsilon("(Log t)^b needs b p' > 1")
        # u = log t; int_0^U (1+u)^{-s} du plus the exact tail beyond U
        U = 1e3
        head, _ = integrate.quad(lambda u: (1.0 + u) ** (-s), 0.0, U, limit=200)
        return head + (1.0 + U) ** (1.0 - s) / (s - 1.0)
    if family == "triple-log":
        if param <= 0:
            raise DivergentEpsilon("triple-log shape needs eta > 0")
        # v = log(1 + log t) turns the integrand into (1+v)^{-1} (Log(1+v))^{-1-eta}
        V = 1e3
        head, _ = integrate.quad(
            lambda v: 1.0 / ((1.0 + v) * (1.0 + math.log1p(v)) ** (1.0 + param)), 0.0, V, limit=400
        )
        return head + (1.0 + math.log1p(V)) ** (-param) / param
    raise ValueError(f"unknown epsilon family {family!r}")


def _growth_exponent(family: str, param: float, c: float, p_prime: float) -> float:
    t = 2.0 ** np.arange(1, 65)
    eps = c * _eps_shape(family, param, p_prime, t)
    return float(np.max(np.log(np.maximum(eps, 1e-300)) / np.log(Log(t))))


def normalize_epsilon(family: str, param: float, p_prime: float) -> EpsilonFunction:
    """Choose c so that int_1^oo eps(t)^{-p'} dt/t = 1."""
    if p_prime <= 1:
        raise ValueError("p' must exceed 1")
    total = _unit_integral(family, float(param), p_prime)
    c = total ** (1.0 / p_prime)
    return EpsilonFunction(family, float(param), c, p_prime, _growth_exponent(family, param, c, p_prime))


def _log_eps(eps: EpsilonFunction, v: float) -> float:
    """log eps(t) in terms of v = log(1 + log t)."""
    if eps.family == "power":
        return math.log(eps.c) + eps.param * math.expm1(v) if v < 700 else math.inf
    if eps.family == "log-power":
        return math.log(eps.c) + eps.param * v
    l3 = 1.0 + math.log1p(v)
    return math.log(eps.c) + (v + math.log1p(v)) / eps.p_prime + (1.0 + eps.param) / eps.p_prime * math.log(l3)


def epsilon_integral(eps: EpsilonFunction, w_max: float = 12.0) -> float:
    """int_1^oo eps(t)^{-p'} dt/t by adaptive quadrature plus a power-law tail.

    Integrates in w = log(1 + log(1 + log t)), where dt/t = (1+u)(1+v) dw with
    u = log t and v = log(1+u); this flattens the slowly decaying families.
    Beyond ``w_max`` the integrand is extrapolated as a power of (1+w) fitted
    on [w_max / 2, w_max].
    """

    def f(w):
        v = math.expm1(w)
        expo = -eps.p_prime * _log_eps(eps, v) + v + w
        return math.exp(expo) if expo > -745 else 0.0

    head, _ = integrate.quad(f, 0.0, w_max, limit=500, epsabs=1e-14, epsrel=1e-12)
    f1, f0 = f(w_max), f(w_max / 2.0)
    if f1 == 0.0 or f0 == 0.0:
        return head
    decay = -math.log(f1 / f0) / math.log((1.0 + w_max) / (1.0 + w_max / 2.0))
    if decay <= 1.0:
        return math.inf
    return head + f1 * (1.0 + w_max) / (decay - 1.0)


# ---------------------------------------------------------------------------


class BumpProfile:
    """Per-level cube statistics of a weight pair, computed once.

    Arrays are indexed by level and hold one entry per cube in flat order.
    """

    def __init__(self, sigma: WeightGrid, w: WeightGrid, A: YoungFunction, p: float, tol: float = 1e-9):
        if (sigma.d, sigma.L) != (w.d, w.L):
            raise ValueError("weights live on different grids")
        self.sigma, self.w, self.A, self.p, self.tol = sigma, w, A, p, tol
        self.p_prime = p / (p - 1.0)
        self.levels = range(sigma.L + 1)

    @cached_property
    def dual(self) -> YoungFunction:
        return dual_young(self.A)

    @cached_property
    def sigma_avg(self) -> list[np.ndarray]:
        return [level_averages(self.sigma, k) for k in self.levels]

    @cached_property
    def w_avg(self) -> list[np.ndarray]:
        return [level_averages(self.w, k) for k in self.levels]

    @cached_property
    def sigma_orlicz(self) -> list[np.ndarray]:
        """<sigma^{1/p'}>_{dual(A),Q}."""
        root = self.sigma.cells ** (1.0 / self.p_prime)
        return orlicz_all_levels(root, self.dual, self.tol)

    @cached_property
    def rho(self) -> list[np.ndarray]:
        out = []
        for orl, avg in zip(self.sigma_orlicz, self.sigma_avg):
            with np.errstate(divide="ignore", invalid="ignore"):
                out.append(np.where(avg > 0, orl / avg ** (1.0 / self.p_prime), np.nan))
        return out

    @property
    def skipped(self) -> int:
        """Cubes with sigma(Q) = 0, excluded from rho-dependent suprema."""
        return int(sum(np.sum(avg == 0) for avg in self.sigma_avg))

    def ap(self) -> float:
        return float(max(np.max(w * s ** (self.p - 1.0)) for w, s in zip(self.w_avg, self.sigma_avg)))

    def separated_terms(self) -> list[np.ndarray]:
        return [o * w ** (1.0 / self.p) for o, w in zip(self.sigma_orlicz, self.w_avg)]

    def separated(self) -> float:
        return float(max(np.max(t) for t in self.separated_terms()))

    def psi(self, eps: EpsilonFunction, arg_mode: str = "one-plus-rho") -> list[np.ndarray]:
        """eps(arg) <sigma^{1/p'}>_{dual(A),Q} <w>_Q^{1/p}; NaN where sigma(Q) = 0."""
        if arg_mode not in ARG_MODES:
            raise ValueError(f"arg_mode must be one of {ARG_MODES}")
        out = []
        for r, term in zip(self.rho, self.separated_terms()):
            arg = 1.0 + r if arg_mode == "one-plus-rho" else r
            with np.errstate(invalid="ignore"):
                val = np.where(np.isnan(r), np.nan, eps(np.nan_to_num(arg, nan=1.0)) * term)
            out.append(val)
        return out

    def entangled(self, eps: EpsilonFunction, arg_mode: str = "one-plus-rho") -> float:
        vals = [v[~np.isnan(v)] for v in self.psi(eps, arg_mode)]
        vals = [v for v in vals if v.size]
        return float(max(np.max(v) for v in vals)) if vals else 0.0


def ap_constant(sigma: WeightGrid, w: WeightGrid, p: float) -> float:
    """max over cubes of <w>_Q <sigma>_Q^{p-1}."""
    from .orlicz import power

    return BumpProfile(sigma, w, power(p), p).ap()


def separated_bump(sigma: WeightGrid, w: WeightGrid, A: YoungFunction, p: float, tol: float = 1e-9) -> float:
    """[sigma, w]_{dual(A), p'}."""
    return BumpProfile(sigma, w, A, p, tol).separated()


def entangled_bump(
    sigma: WeightGrid,
    w: WeightGrid,
    A: YoungFunction,
    eps: EpsilonFunction,
    p: float,
    arg_mode: str = "one-plus-rho",
    tol: float = 1e-9,
) -> float:
    """Bump penalized by eps at (1 +) the Orlicz-to-power ratio rho(Q)."""
    return BumpProfile(sigma, w, A, p, tol).entangled(eps, arg_mode)


def rho(sigma: WeightGrid, A: YoungFunction, p: float, Q: DyadicCube, tol: float = 1e-9) -> float:
    """<sigma^{1/p'}>_{dual(A),Q} / <sigma>_Q^{1/p'}; NaN when sigma(Q) = 0."""
    pp = p / (p - 1.0)
    vals, masses = cube_samples(sigma.cells, Q, sigma.L)
    avg = float(vals.mean())
    if avg == 0.0:
        return math.nan
    return luxembourg_norm((vals ** (1.0 / pp), masses), dual_young(A), tol) / avg ** (1.0 / pp)

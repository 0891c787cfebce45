"""Young functions, Luxembourg norms and the B_p integral test.

Parametric families are described on the *dual side* by the closed form

    G(t) = t^q (Log t)^a (Log Log t)^b,   Log t := 1 + max(0, log t),

which is convex, increasing and satisfies G(1) = 1 whenever q >= 1 and
a, b >= 0.  The bump itself (the primal function, slightly smaller than a
power) is the Legendre conjugate of G with its argument rescaled so that
A(1) = 1.  This keeps every family a genuine Young function and makes the
pair (A, dual(A)) satisfy Young's inequality with constant 1.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "DomainError",
    "YoungFunction",
    "power",
    "log_bump",
    "loglog_bump",
    "tabulated",
    "Log",
    "eval_young",
    "dual_young",
    "numeric_dual",
    "luxembourg_norm",
    "luxembourg_norms",
    "bp_integral",
    "BpResult",
    "holder_pair",
    "young_constant",
    "HOLDER_CONSTANT",
    "FAMILIES",
]

FAMILIES = ("power", "log-bump", "loglog-bump", "tabulated")

#: Constant in the generalized Hölder inequality on probability spaces.  The
#: built-in pairs satisfy Young's inequality s*t <= A(s) + dual(A)(t), which
#: gives the bound with constant 2.
HOLDER_CONSTANT = 2.0

MASS_TOL = 1e-12


class DomainError(ValueError):
    """Raised for arguments outside the domain of a Young function."""


def Log(t):
    """Log t := 1 + max(0, log t), vectorized."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return 1.0 + np.log(np.maximum(t, 1.0))


def _closed_form(t, q, a, b):
    t = np.asarray(t, dtype=float)
    l1 = Log(t)
    out = t**q
    if a:
        out = out * l1**a
    if b:
        out = out * Log(l1) ** b
    return out


# ---------------------------------------------------------------------------
# Legendre conjugate of the closed form G


@dataclass(frozen=True)
class _Conjugate:
    """Tabulated inverse of G' used to evaluate G* through the envelope identity."""

    q: float
    a: float
    b: float
    log_slope: np.ndarray = field(repr=False)  # log G'(e^x) on the x grid
    xs: np.ndarray = field(repr=False)

    @property
    def kink(self) -> float:
        # G' jumps from q to q + a + b at t = 1
        return self.q + self.a + self.b

    def argmax(self, u: np.ndarray) -> np.ndarray:
        """Maximizer s of u*s - G(s)."""
        q = self.q
        s = np.ones_like(u)
        low = u <= q
        s[low] = (u[low] / q) ** (1.0 / (q - 1.0))
        high = u > self.kink
        if np.any(high):
            lu = np.log(u[high])
            x = np.interp(lu, self.log_slope, self.xs)
            beyond = lu > self.log_slope[-1]
            if np.any(beyond):
                x[beyond] = self.xs[-1] + (lu[beyond] - self.log_slope[-1]) / (q - 1.0)
            s[high] = np.exp(x)
        return s

    def __call__(self, u: np.ndarray) -> np.ndarray:
        s = self.argmax(u)
        # first-order errors in s cancel at the maximizer
        return np.maximum(u * s - _closed_form(s, self.q, self.a, self.b), 0.0)


def _log_slope(x, q, a, b):
    l1 = 1.0 + x
    l2 = 1.0 + np.log(l1)
    return (q - 1.0) * x + a * np.log(l1) + b * np.log(l2) + np.log(q + a / l1 + b / (l1 * l2))


@functools.lru_cache(maxsize=64)
def _conjugate(q: float, a: float, b: float) -> _Conjugate:
    if q <= 1.0:
        raise DomainError("conjugate requires exponent q > 1")
    xs = np.concatenate([np.linspace(0.0, 2.0, 4001), np.linspace(2.0, 200.0, 40001)[1:]])
    ls = _log_slope(xs, q, a, b)
    if np.any(np.diff(ls) <= 0):
        raise DomainError("closed form is not strictly convex; cannot conjugate")
    return _Conjugate(q, a, b, ls, xs)


@functools.lru_cache(maxsize=64)
def _argument_scale(q: float, a: float, b: float) -> float:
    """k with G*(k) = 1."""
    conj = _conjugate(q, a, b)
    lo, hi = 1e-6, 2.0
    while conj(np.array([hi]))[0] < 1.0:
        hi *= 2.0
    return optimize.brentq(lambda u: conj(np.array([u]))[0] - 1.0, lo, hi, xtol=1e-15, rtol=1e-15)


# ---------------------------------------------------------------------------
# Young functions


@dataclass(frozen=True)
class YoungFunction:
    """Descriptor of a Young function.

    ``p`` is the exponent of the primal function; ``dual=True`` marks the
    conjugate side (exponent p').  ``normalizer`` forces A(1) = 1: it is an
    argument scale for conjugate-defined bumps and an amplitude factor for
    tabulated functions.  ``scale`` keeps the raw value at 1 before
    normalization (metadata only).
    """

    family: str
    p: float
    eta: float = 0.0
    dual: bool = False
    normalizer: float = 1.0
    table: tuple | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown Young family {self.family!r}")
        if self.family == "power":
            if self.p < 1.0:
                raise ValueError("power exponent must be >= 1")
        elif self.family != "tabulated" and self.p <= 1.0:
            raise ValueError("bump exponent must be > 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.family == "tabulated":
            if self.table is None or len(self.table) < 2:
                raise ValueError("tabulated family needs at least two samples")
            t, v = np.asarray(self.table, dtype=float).T
            if np.any(t <= 0) or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated abscissae must be positive and increasing")
            if np.any(v <= 0) or np.any(np.diff(v) < 0):
                raise ValueError("tabulated values must be positive and non-decreasing")

    @property
    def p_prime(self) -> float:
        return math.inf if self.p == 1 else self.p / (self.p - 1.0)

    @property
    def exponent(self) -> float:
        """Power-law exponent of the function itself."""
        if self.family == "tabulated":
            t, v = np.log(np.asarray(self.table, dtype=float).T)
            return float((v[-1] - v[-2]) / (t[-1] - t[-2]))
        return self.p_prime if self.dual else self.p

    def closed_form_params(self) -> tuple[float, float, float]:
        """(q, a, b) of the dual-side closed form t^q (Log t)^a (Log Log t)^b."""
        p, eta = self.p, self.eta
        if self.family == "power":
            return (self.exponent, 0.0, 0.0)
        pp = p / (p - 1.0)
        if self.family == "log-bump":
            return (pp, 1.0 / (p - 1.0) + eta, 0.0)
        if self.family == "loglog-bump":
            return (pp, 1.0 / (p - 1.0), 1.0 / (p - 1.0) + eta)
        raise ValueError("tabulated functions have no closed form")

    def asymptotics(self) -> tuple[float, float, float]:
        """(r, e1, e2) with A(t) ~ C t^r (log t)^e1 (log log t)^e2 as t -> oo."""
        if self.family == "tabulated":
            return (self.exponent, 0.0, 0.0)
        if self.family == "power":
            return (self.exponent, 0.0, 0.0)
        q, a, b = self.closed_form_params()
        if self.dual:
            return (q, a, b)
        # conjugation maps t^q L^a LL^b to t^p L^{-a(p-1)} LL^{-b(p-1)}
        return (self.p, -a * (self.p - 1.0), -b * (self.p - 1.0))

    def __call__(self, t):
        return eval_young(self, t)

    def to_dict(self) -> dict:
        out = {"family": self.family, "p": float(self.p)}
        if self.family != "power":
            out["eta"] = float(self.eta)
        if self.dual:
            out["dual"] = True
        if self.family == "tabulated":
            out["table"] = [list(map(float, row)) for row in self.table]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "YoungFunction":
        family = data["family"]
        p = float(data["p"])
        eta = float(data.get("eta", 0.0))
        dual = bool(data.get("dual", False))
        if family == "power":
            return power(p) if not dual else dual_young(power(p))
        if family == "tabulated":
            return tabulated(data["table"])
        maker = log_bump if family == "log-bump" else loglog_bump
        A = maker(p, eta)
        return dual_young(A) if dual else A


def power(p: float) -> YoungFunction:
    return YoungFunction("power", float(p))


def _bump(family: str, p: float, eta: float, dual: bool = False) -> YoungFunction:
    A = YoungFunction(family, float(p), float(eta), dual=dual)
    if dual:
        return A
    return replace(A, normalizer=_argument_scale(*A.closed_form_params()))


def log_bump(p: float, eta: float) -> YoungFunction:
    """L_{p',eta}: t^p (Log t^{p'})^{-1-(p-1)eta} up to constants, in B_p."""
    return _bump("log-bump", p, eta)


def loglog_bump(p: float, eta: float) -> YoungFunction:
    """Lambda_{p',eta}: t^p (Log t)^{-1} (Log Log t)^{-1-(p-1)eta} up to constants."""
    return _bump("loglog-bump", p, eta)


def tabulated(table: Iterable[Sequence[float]]) -> YoungFunction:
    """Young function interpolated log-log through monotone samples (t, A(t))."""
    rows = tuple((float(t), float(v)) for t, v in table)
    probe = YoungFunction("tabulated", p=1.0, table=rows)
    raw = _eval_table(rows, np.array([1.0]))[0]
    return replace(probe, normalizer=1.0 / raw, scale=raw)


def _eval_table(rows, t):
    xs, ys = np.log(np.asarray(rows, dtype=float).T)
    out = np.zeros_like(t)
    pos = t > 0
    lt = np.log(t[pos])
    ly = np.interp(lt, xs, ys)
    lo, hi = lt < xs[0], lt > xs[-1]
    s0 = (ys[1] - ys[0]) / (xs[1] - xs[0])
    s1 = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    ly[lo] = ys[0] + s0 * (lt[lo] - xs[0])
    ly[hi] = ys[-1] + s1 * (lt[hi] - xs[-1])
    out[pos] = np.exp(ly)
    return out


def eval_young(A: YoungFunction, t):
    """A(t) for t >= 0; scalar in, scalar out."""
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("Young functions are defined on [0, oo)")
    flat = np.atleast_1d(arr).astype(float)
    if A.family == "power":
        out = flat**A.exponent
    elif A.family == "tabulated":
        out = A.normalizer * _eval_table(A.table, flat)
    elif A.dual:
        out = _closed_form(flat, *A.closed_form_params())
    else:
        out = _conjugate(*A.closed_form_params())(A.normalizer * flat)
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def young_derivative(A: YoungFunction, t):
    """Right derivative A'(t), used for the numeric dual."""
    t = np.asarray(t, dtype=float)
    if A.family == "power":
        return A.exponent * t ** (A.exponent - 1.0)
    h = 1e-6
    return (eval_young(A, t * math.exp(h)) - eval_young(A, t * math.exp(-h))) / (
        t * (math.exp(h) - math.exp(-h))
    )


def dual_young(A: YoungFunction) -> YoungFunction:
    """The dual Young function, normalized to equal 1 at 1."""
    if A.family == "power":
        if A.p == 1:
            raise DomainError("t -> t has no finite dual Young function")
        return power(A.p_prime)
    if A.family == "tabulated":
        return numeric_dual(A)
    return _bump(A.family, A.p, A.eta, dual=not A.dual)


def numeric_dual(A: YoungFunction, t_max: float = 1e8, nodes: int = 2048) -> YoungFunction:
    """Dual by trapezoidal quadrature of the inverse derivative on a log grid.

    Returns a tabulated Young function normalized by an argument rescaling,
    the convention used for the closed-form pairs; ``scale`` holds that factor.
    """
    x_lo, x_hi = 1e-6, 1e4
    while float(young_derivative(A, x_hi)) < 10 * t_max:
        x_hi *= 100.0
        if x_hi > 1e200:
            raise DomainError("derivative does not reach the requested range")
    xs = np.geomspace(x_lo, x_hi, nodes)
    slopes = np.maximum.accumulate(young_derivative(A, xs))
    # integrate the inverse of s = A'(x) in s: area under x(s)
    first = 0.5 * xs[0] * slopes[0]
    steps = 0.5 * (xs[1:] + xs[:-1]) * np.diff(slopes)
    vals = first + np.concatenate([[0.0], np.cumsum(steps)])
    keep = np.concatenate([[True], np.diff(slopes) > 0])
    s, v = slopes[keep], vals[keep]
    # normalize in the argument, as for the closed-form pairs: t -> raw(s1 t) with raw(s1) = 1
    s1 = float(np.exp(np.interp(0.0, np.log(v), np.log(s))))
    out = tabulated(zip((s / s1).tolist(), v.tolist()))
    return replace(out, scale=s1)


# ---------------------------------------------------------------------------
# Luxembourg norms


def _as_samples(samples):
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 1:
        values, masses = samples
    else:
        pairs = list(samples)
        if not pairs:
            raise ValueError("empty sample list")
        values, masses = zip(*pairs)
    values = np.asarray(values, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample list")
    return values, masses


def luxembourg_norm(samples, A, tol: float = 1e-9) -> float:
    """inf{lam > 0 : sum A(v_i/lam) m_i <= 1} over a probability sample list.

    ``samples`` is a sequence of (value, mass) pairs or a (values, masses)
    tuple of arrays.  ``A`` may be a YoungFunction or any increasing callable
    with A(0) = 0 and A(1) = 1.
    """
    values, masses = _as_samples(samples)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("sample values must be finite and nonnegative")
    if np.any(masses < 0) or abs(masses.sum() - 1.0) > MASS_TOL:
        raise ValueError("masses must be nonnegative and sum to 1")
    return float(luxembourg_norms(values[None, :], masses, A, tol)[0])


def _raw_eval(A: YoungFunction, flat: np.ndarray) -> np.ndarray:
    if A.family == "power":
        return flat**A.exponent
    if A.family == "tabulated":
        return A.normalizer * _eval_table(A.table, flat)
    if A.dual:
        return _closed_form(flat, *A.closed_form_params())
    return _conjugate(*A.closed_form_params())(A.normalizer * flat)


def luxembourg_norms(values, masses, A, tol: float = 1e-9, max_iter: int = 200) -> np.ndarray:
    """Row-wise Luxembourg norms of ``values`` (shape (B, n)).

    ``masses`` has shape (n,) or (B, n).  Rows are solved simultaneously by a
    bracketed Illinois iteration on x = log(lam) for log(sum A(v/lam) m) = 0,
    which is exact in one step for powers.  The answer is the geometric
    midpoint of a bracket of relative width <= tol.
    """
    values = np.asarray(values, dtype=float)
    masses = np.broadcast_to(np.asarray(masses, dtype=float), values.shape)
    if isinstance(A, YoungFunction):
        f = functools.partial(_raw_eval, A)
    else:
        f = A
    vals = np.where(masses > 0, values, 0.0)
    vmax = vals.max(axis=1)
    out = np.zeros(len(vals))
    live = vmax > 0
    if not np.any(live):
        return out
    v, m, top = vals[live], masses[live], vmax[live]
    rows = np.arange(len(v))

    def g(x, idx):
        lam = np.exp(x)
        with np.errstate(divide="ignore", over="ignore"):
            return np.log((np.asarray(f(v[idx] / lam[:, None])) * m[idx]).sum(axis=1))

    # Jensen puts the norm of a convex A with A(1) = 1 in [mean, max]; widen
    # the bracket for anything else
    mean = (v * m).sum(axis=1)
    x_lo = np.log(np.maximum(mean, top * 1e-300))
    x_hi = np.log(top)
    g_lo, g_hi = g(x_lo, rows), g(x_hi, rows)
    for _ in range(60):
        bad = g_lo < 0
        if not np.any(bad):
            break
        x_lo[bad] -= 5.0
        g_lo[bad] = g(x_lo[bad], rows[bad])
    for _ in range(60):
        bad = g_hi > 0
        if not np.any(bad):
            break
        x_hi[bad] += 5.0
        g_hi[bad] = g(x_hi[bad], rows[bad])
    exact_lo = g_lo == 0
    x_hi[exact_lo] = x_lo[exact_lo]
    side = np.zeros(len(v), dtype=int)
    log_tol = math.log1p(tol)
    for it in range(max_iter):
        act = np.nonzero(x_hi - x_lo > log_tol)[0]
        if act.size == 0:
            break
        a, b, ga, gb = x_lo[act], x_hi[act], g_lo[act], g_hi[act]
        with np.errstate(invalid="ignore", divide="ignore"):
            x = b - gb * (b - a) / (gb - ga)
        # fall back to bisection on stale or non-finite secant points
        mid = 0.5 * (a + b)
        stale = ~np.isfinite(x) | (x <= a) | (x >= b) | (it % 8 == 7)
        x = np.where(stale, mid, x)
        gx = g(x, act)
        pos = gx > 0
        zero = gx == 0
        # illinois: halve the retained end after two steps on the same side
        keep_hi = pos & (side[act] == 1)
        keep_lo = ~pos & ~zero & (side[act] == -1)
        g_hi[act[keep_hi]] *= 0.5
        g_lo[act[keep_lo]] *= 0.5
        x_lo[act[pos]] = x[pos]
        g_lo[act[pos]] = gx[pos]
        side[act[pos]] = 1
        neg = ~pos
        x_hi[act[neg]] = x[neg]
        g_hi[act[neg]] = gx[neg]
        side[act[neg]] = -1
        x_lo[act[zero]] = x[zero]
    out[live] = np.exp(0.5 * (x_lo + x_hi))
    return out


# ---------------------------------------------------------------------------
# B_p test and Hölder


@dataclass(frozen=True)
class BpResult:
    value: float
    verdict: str  # finite | divergent | inconclusive-tail
    tail: float = math.nan


def bp_integral(A: YoungFunction, p: float, T_max: float = 1e6) -> BpResult:
    """Quadrature of int_1^{T_max} A(t) t^{-p} dt/t with a tail classification."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    upper = math.log(T_max)

    def integrand(u):
        return float(eval_young(A, math.exp(u))) * math.exp(-p * u)

    value, _ = integrate.quad(integrand, 0.0, upper, limit=400)
    if A.family == "tabulated":
        return BpResult(value, "inconclusive-tail")
    r, e1, e2 = A.asymptotics()
    tol = 1e-12
    if r > p + tol:
        return BpResult(value, "divergent", math.inf)
    local = integrand(upper)  # A(T) T^{-p}
    l1 = 1.0 + upper
    l2 = 1.0 + math.log(l1)
    if r < p - tol:
        return BpResult(value, "finite", local / (p - r))
    c = local / (l1**e1 * l2**e2)
    if e1 < -1:
        return BpResult(value, "finite", c * l2**min(e2, 0.0) * l1 ** (e1 + 1) / (-e1 - 1))
    if abs(e1 + 1) <= tol and e2 < -1:
        return BpResult(value, "finite", c * l2 ** (e2 + 1) / (-e2 - 1))
    return BpResult(value, "divergent", math.inf)


def young_constant(A: YoungFunction) -> float:
    """C with s*t <= A(s) + C * dual(A)(t) for the normalized pair."""
    if A.family != "tabulated":
        return 1.0
    D = dual_young(A)
    if D.scale >= 1.0:
        return 1.0
    # st <= A(s) + D(t / scale); bound the dilation on a log grid
    x = np.geomspace(1e-6, 1e6, 2001)
    return float(max(1.0, np.max(eval_young(D, x / D.scale) / eval_young(D, x))))


def holder_pair(f, g, masses, A: YoungFunction, tol: float = 1e-9) -> tuple[float, float]:
    """(sum f g m, ||f||_A * ||g||_dual(A)) on a shared probability space."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    masses = np.asarray(masses, dtype=float)
    lhs = float(np.sum(f * g * masses))
    rhs = luxembourg_norm((f, masses), A, tol) * luxembourg_norm((g, masses), dual_young(A), tol)
    return lhs, rhs

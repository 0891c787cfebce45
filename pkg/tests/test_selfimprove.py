import math

import numpy as np
import pytest

from bumplab.grid import DyadicCube, WeightGrid
from bumplab.orlicz import Log, luxembourg_norm
from bumplab.selfimprove import (
    CASES,
    BetaFactor,
    distinct_steps,
    distribution,
    orlicz_via_distribution,
    proposition_eta,
    self_improve_check,
    weak_concavity_check,
)

from conftest import random_grid


def test_distribution_constant():
    s = np.full(8, 3.0)
    assert distribution(s, None, 2.9) == 1.0
    assert distribution(s, None, 3.0) == 0.0


def test_distribution_two_valued():
    s = WeightGrid(1, 1, np.array([4.0, 1.0]))
    assert distribution(s, DyadicCube.root(1), 2.0) == 0.5


def test_distribution_sort_oracle(rng):
    g = random_grid(rng, 2, 3)
    Q = DyadicCube(1, (1, 0))
    vals = sorted(g.cells[4:8, 0:4].ravel())
    for lam in rng.uniform(0, 4, 50):
        count = sum(1 for v in vals if v > lam)
        assert distribution(g, Q, lam) == count / len(vals)


def test_chebyshev_exact(rng):
    for _ in range(100):
        s = np.exp(rng.normal(0, 2, 32))
        for lam in np.geomspace(1e-3, 1e3, 20):
            assert distribution(s, None, lam) <= s.mean() / lam


def test_distinct_steps():
    levels, D = distinct_steps(np.array([1.0, 4.0, 4.0, 0.0]))
    assert levels.tolist() == [1.0, 4.0]
    assert D.tolist() == [0.75, 0.5]


def test_via_distribution_constant():
    f = BetaFactor("log", 2.0, 1.0)
    assert orlicz_via_distribution(np.full(4, 2.5), None, f.beta) == pytest.approx(2.5 * float(f.beta(1.0)))


def test_via_distribution_two_valued():
    f = BetaFactor("log", 2.0, 1.0)
    s = np.array([4.0, 1.0])
    # D = 1 on [0, 1), 1/2 on [1, 4)
    want = 1.0 * float(f.beta(1.0)) + 3.0 * 0.5 * float(f.beta(2.0))
    assert orlicz_via_distribution(s, None, f.beta) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("case", CASES)
def test_via_distribution_window(rng, case):
    f = BetaFactor(case, 2.0, 1.0)
    ratios = []
    for _ in range(200):
        s = np.exp(rng.normal(0, rng.uniform(0.5, 3), 1 << int(rng.integers(2, 7))))
        lux = luxembourg_norm((s, np.full(s.size, 1 / s.size)), lambda t: f.B(t))
        ratios.append(orlicz_via_distribution(s, None, f.beta) / lux)
    assert 1 / 16 < min(ratios) and max(ratios) < 16


def test_beta_factor_identities():
    f = BetaFactor("log", 2.0, 1.0)
    u = np.geomspace(1.0, 1e6, 20)
    np.testing.assert_allclose(f.beta(u), Log(u) ** 2.0)
    np.testing.assert_allclose(f.beta0(u), f.beta(u) * (1 + Log(u)) ** -0.5)
    g = BetaFactor("loglog", 3.0, 1.0, 0.5)
    np.testing.assert_allclose(g.theta(u), Log(u) ** -1.25)


def test_weak_concavity_linear():
    ok, C = weak_concavity_check(lambda t: t, (1.0, 10.0), trials=2000)
    assert ok and C == pytest.approx(1.0, abs=1e-9)


def test_weak_concavity_convex_grows_with_spread():
    _, narrow = weak_concavity_check(lambda t: t**2, (1.0, 2.0), trials=2000)
    ok, wide = weak_concavity_check(lambda t: t**2, (1.0, 100.0), trials=2000)
    assert narrow > 1.0 and wide > 4 * narrow and not ok


def test_weak_concavity_tilde_theta():
    f = BetaFactor("log", 2.0, 0.5)
    ok, C = weak_concavity_check(f.tilde_theta, (1.0, 1e6), trials=3000)
    assert ok and C < 2.0


def test_self_improve_constant():
    f = BetaFactor("log", 2.0, 1.0)
    lhs, rhs, r = self_improve_check(np.full(8, 3.0), None, f)
    assert lhs == pytest.approx(3.0 * float(f.beta0(1.0)))
    assert math.isfinite(r)


def test_self_improve_zero_mean():
    assert self_improve_check(np.zeros(4), None, BetaFactor("log", 2.0, 1.0)) is None


@pytest.mark.parametrize("case", CASES)
def test_self_improve_batch_and_spike(rng, case):
    f = BetaFactor(case, 2.0, 1.0)
    batch = max(self_improve_check(np.exp(rng.normal(0, 2, 64)), None, f)[2] for _ in range(200))
    spike = np.ones(64)
    spike[5] = 1e6
    assert self_improve_check(spike, None, f)[2] <= max(batch, 4.0)


@pytest.mark.parametrize("case", CASES)
def test_proposition_constant_weights(case):
    one = WeightGrid.constant(1, 4)
    rep = proposition_eta(one, one, 2.0, 1.0, case)
    assert rep.separated == pytest.approx(1.0, rel=1e-9)
    assert rep.entangled == pytest.approx(rep.eps(2.0), rel=1e-9)
    assert rep.finite_integral == pytest.approx(1.0, abs=1e-6)


def test_proposition_identity_and_chain(rng):
    for seed in range(10):
        sigma, w = random_grid(rng, 1, 5, 1.5), random_grid(rng, 1, 5, 1.5)
        rep = proposition_eta(sigma, w, 2.0, 1.0)
        assert rep.theta_identity_err < 1e-6
        assert rep.ratio <= 32 and rep.chain_max <= 32


def test_bad_case():
    with pytest.raises(ValueError):
        BetaFactor("cubic", 2.0, 1.0)

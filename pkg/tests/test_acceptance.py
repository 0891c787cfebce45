"""Exit criteria of the build.  Each test prints one PASS/FAIL line."""

import contextlib
import io
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from bumplab.bumps import epsilon_integral, normalize_epsilon
from bumplab.cli import run_command
from bumplab.corona import run_corona
from bumplab.grid import DyadicCube, WeightGrid, cube_samples
from bumplab.orlicz import Log, eval_young, log_bump, luxembourg_norm, luxembourg_norms, numeric_dual, power
from bumplab.search import KINDS, constants, generate_instance, local_search
from bumplab.selfimprove import CASES, BetaFactor, distribution, orlicz_via_distribution, proposition_eta
from bumplab.sparse import SparseOperator, apply_sparse, dense_norm_p2, norm_oracle, orlicz_maximal, testing_constant

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def test_criterion_1_power_exactness(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    masses = np.full(64, 1 / 64)
    for p in (1.5, 2.0, 3.0, 4.0):
        vals = np.exp(rng.normal(0, 2, (250, 64)))
        got = luxembourg_norms(vals, masses, power(p))
        want = (vals**p).mean(axis=1) ** (1 / p)
        worst = max(worst, float(np.max(np.abs(got / want - 1))))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-9 and elapsed < 5, f"max rel err {worst:.2e} on 1000 inputs, {elapsed:.2f}s")


def test_criterion_2_duality(report):
    worst = (math.inf, 0.0)
    for p in (1.5, 2.0, 3.0):
        pp = p / (p - 1)
        for eta in (0.5, 1.0):
            N = numeric_dual(log_bump(p, eta))
            for t in (10.0, 1e3, 1e6):
                r = eval_young(N, t) / (t**pp * float(Log(t)) ** (1 / (p - 1) + eta))
                worst = (min(worst[0], r), max(worst[1], r))
    ok = 0.5 <= worst[0] and worst[1] <= 2.0
    report(2, ok, f"numeric/closed ratio in [{worst[0]:.3f}, {worst[1]:.3f}] over 18 points")


def test_criterion_3_sawyer_sandwich(report):
    start = time.perf_counter()
    lo, hi, dense_err, unconverged = math.inf, 0.0, 0.0, 0
    for p in (1.5, 2.0, 3.0):
        for L in (4, 6):
            for s in range(100):
                inst = generate_instance(KINDS[s % 3], 1, L, p, 1000 * L + s)
                T = SparseOperator(inst.collection, L)
                est = norm_oracle(T, inst.sigma, inst.w, p)
                r = est.value / testing_constant(T, inst.sigma, inst.w, p)
                lo, hi = min(lo, r), max(hi, r)
                unconverged += not est.converged
                if p == 2.0:
                    dense_err = max(dense_err, abs(est.value / dense_norm_p2(T, inst.sigma, inst.w) - 1))
    elapsed = time.perf_counter() - start
    ok = lo >= 1 - 1e-12 and hi <= 32 and dense_err <= 1e-6 and elapsed < 120 and unconverged == 0
    report(3, ok, f"norm/testing in [{lo:.4f}, {hi:.4f}], dense err {dense_err:.1e}, {elapsed:.1f}s, 600 instances")


def _maximal_ratio(A, L, trials=50, seed=0):
    rng = np.random.default_rng(seed)
    n = 1 << L
    best = 0.0
    for _ in range(trials):
        f = np.zeros((n, n))
        for _ in range(int(rng.integers(1, 4))):
            f[rng.integers(0, n), rng.integers(0, n)] += math.exp(rng.normal())
        M = orlicz_maximal(f, A)
        best = max(best, math.sqrt((M**2).mean() / (f**2).mean()))
    return best


def test_criterion_4_maximal_dichotomy(report):
    bump = [_maximal_ratio(log_bump(2.0, 1.0), L) for L in (4, 8)]
    sq = [_maximal_ratio(power(2.0), L) for L in (4, 8)]
    g_bump = bump[1] / bump[0] - 1
    g_sq = sq[1] / sq[0] - 1
    ok = abs(g_bump) < 0.20 and g_sq >= 0.30
    report(4, ok, f"d=2, L 4->8: bump growth {g_bump:+.1%}, t^2 growth {g_sq:+.1%}")


SEARCH_RUNS = [(L, p, seed) for seed, (L, p) in enumerate(
    [(4, 1.5), (6, 2.0), (8, 3.0), (4, 2.0), (6, 3.0), (8, 1.5), (4, 3.0), (6, 1.5), (8, 2.0), (4, 2.0)]
)]


@pytest.fixture(scope="module")
def theorem_batch():
    generated = []
    for s in range(500):
        L = (4, 6, 8)[s % 3]
        p = (1.5, 2.0, 3.0)[(s // 3) % 3]
        generated.append(generate_instance(KINDS[(s // 9) % 3], 1, L, p, 50_000 + s))
    values = [constants(inst).objective("theorem-ratio").value for inst in generated]
    searches = []
    for L, p, seed in SEARCH_RUNS:
        start = generate_instance(KINDS[seed % 3], 1, L, p, 90_000 + seed)
        searches.append(local_search(start, "theorem-ratio", 2000, seed=seed))
    return generated, values, searches


def test_criterion_5_theorem_ratio_stable(report, theorem_batch):
    generated, values, searches = theorem_batch
    base = max(v for v in values if math.isfinite(v))

    # the shared best record: generated batch plus every run's best after k steps
    def record(k):
        return max([base] + [res.trace[k - 1]["best"] for res in searches])

    shared_gain = record(2000) / record(1500) - 1
    per_run = max(res.best_value / res.trace[1499]["best"] - 1 for res in searches)
    by_L = {L: 0.0 for L in (4, 6, 8)}
    for inst, v in zip(generated, values):
        if math.isfinite(v):
            by_L[inst.L] = max(by_L[inst.L], v)
    for (L, _, _), res in zip(SEARCH_RUNS, searches):
        by_L[L] = max(by_L[L], res.best_value)
    ok = shared_gain < 0.10 and by_L[8] <= 2 * by_L[4]
    report(
        5, ok,
        f"last-quartile gain of running max {shared_gain:.2%} (worst single run {per_run:.2%}); "
        f"max ratio L=4 {by_L[4]:.4f}, L=6 {by_L[6]:.4f}, L=8 {by_L[8]:.4f}",
    )


def test_criterion_6_corona_invariants(report, theorem_batch):
    generated, _, searches = theorem_batch
    instances = generated + [res.best for res in searches]
    failures, sharp = 0, 0
    for inst in instances:
        T = SparseOperator(inst.collection, inst.L)
        est = norm_oracle(T, inst.sigma, inst.w, inst.p, restarts=2)
        g = apply_sparse(T, inst.sigma, est.f) ** (inst.p - 1)
        inv = run_corona(inst.collection, inst.sigma, inst.w, inst.A, inst.eps_p, inst.p, g).invariants
        sharp += inv["sharp_failures"]
        failures += not (inv["T_subset_S"] and inv["iS_le_iT"] and inv["regimes_partition"] and inv["packing"])
    ok = failures == 0 and sharp == 0
    report(6, ok, f"{len(instances)} instances: structural failures {failures}, sharp-mass failures {sharp}")


def test_criterion_7_epsilon_normalization(report):
    closed = 0.0
    for a in (0.1, 0.25, 0.5, 1.0, 2.0):
        for pp in (1.5, 2.0, 3.0):
            closed = max(closed, abs(normalize_epsilon("power", a, pp).c / (a * pp) ** (-1 / pp) - 1))
    quad = 0.0
    for family, params in (("power", (0.1, 0.5, 2.0)), ("log-power", (1.0, 2.0)), ("triple-log", (0.5, 1.0, 2.0))):
        for param in params:
            for pp in (1.5, 2.0, 3.0):
                eps = normalize_epsilon(family, param, pp)
                quad = max(quad, abs(epsilon_integral(eps) - 1))
    c = normalize_epsilon("power", 0.25, 2.0).c
    ok = closed <= 1e-9 and quad <= 1e-6 and abs(c - math.sqrt(2)) <= 1e-9
    report(7, ok, f"closed-form err {closed:.1e}, c(1/4,2)={c:.12f}, quadrature err {quad:.1e}")


def test_criterion_8_distribution_equivalence(report):
    rng = np.random.default_rng(8)
    lo, hi, cheb_bad = math.inf, 0.0, 0
    for case in CASES:
        factor = BetaFactor(case, 2.0, 1.0)
        for _ in range(500):
            L = int(rng.integers(2, 7))
            sigma = WeightGrid(1, L, np.exp(rng.normal(0, rng.uniform(0.3, 3.0), 1 << L)))
            level = int(rng.integers(0, L + 1))
            Q = DyadicCube(level, (int(rng.integers(0, 1 << level)),))
            vals, masses = cube_samples(sigma.cells, Q, L)
            r = orlicz_via_distribution(sigma, Q, factor.beta) / luxembourg_norm((vals, masses), factor.B)
            lo, hi = min(lo, r), max(hi, r)
            total = sum(Fraction(float(v)) for v in vals) / len(vals)
            for lam in np.concatenate([vals, rng.uniform(0, vals.max(), 5)]):
                if lam > 0 and Fraction(distribution(sigma, Q, lam)) > total / Fraction(float(lam)):
                    cheb_bad += 1
    C = max(hi, 1 / lo)
    report(8, C < 16 and cheb_bad == 0, f"ratio window [{lo:.3f}, {hi:.3f}] so C={C:.3f}; Chebyshev violations {cheb_bad}")


def test_criterion_9_proposition_audit(report):
    rng = np.random.default_rng(9)
    worst, chain, ident = 0.0, 0.0, 0.0
    for k in range(200):
        p = (1.5, 2.0, 3.0)[k % 3]
        L = 5
        sigma = WeightGrid(1, L, np.exp(rng.normal(0, 1.0, 1 << L)))
        w = WeightGrid(1, L, np.exp(rng.normal(0, 1.0, 1 << L)))
        rep = proposition_eta(sigma, w, p, 1.0, "log")
        if not math.isfinite(rep.separated):
            continue
        worst = max(worst, rep.ratio)
        chain = max(chain, rep.chain_max)
        ident = max(ident, rep.theta_identity_err)
    C = max(worst, chain)
    report(9, C < 32 and ident < 1e-6, f"entangled/separated max {worst:.3f}, per-cube chain max {chain:.3f}, C={C:.3f}")


def _capture(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(io.StringIO()):
        code = run_command(argv)
    return code, buf.getvalue()


def test_criterion_10_determinism(report, tmp_path):
    mismatches = []
    paths = [tmp_path / f"g{i}.json" for i in range(2)]
    for path in paths:
        run_command(["gen", "--kind", "power-spike", "--d", "1", "--L", "5", "--p", "1.5", "--seed", "4", "--output", str(path), "--quiet"])
    if paths[0].read_bytes() != paths[1].read_bytes():
        mismatches.append("gen")
    src = str(paths[0])
    commands = [
        ["constants"], ["testing"], ["norm"], ["corona-report"], ["verify-theorem"], ["verify-theorem", "--steps", "20"],
        ["prop-eta", "--case", "loglog"], ["search", "--steps", "25"], ["constants", "--format", "json"],
    ]
    for cmd in commands:
        argv = cmd[:1] + ["--input", src, "--seed", "11", "--quiet"] + cmd[1:]
        first, second = _capture(argv), _capture(argv)
        if first != second or first[0] != 0:
            mismatches.append(" ".join(cmd))
    report(10, not mismatches, f"{len(commands) + 1} commands byte-identical on rerun" if not mismatches else f"differ: {mismatches}")

from fractions import Fraction

import numpy as np
import pytest

from bumplab.grid import (
    DyadicCube,
    GridError,
    WeightGrid,
    all_cubes,
    average,
    broadcast_level,
    cube_samples,
    level_averages,
    level_orlicz,
    orlicz_all_levels,
    weighted_average,
)
from bumplab.orlicz import log_bump, luxembourg_norm, power

from conftest import cell_indices, cubes_of, loop_average, random_grid


def test_cube_geometry():
    Q = DyadicCube(2, (1, 3))
    assert Q.measure() == Fraction(1, 16)
    assert Q.parent() == DyadicCube(1, (0, 1))
    assert len(Q.children()) == 4
    assert all(Q.contains(c) for c in Q.children())
    assert DyadicCube.root(2).contains(Q)
    assert not Q.contains(Q.parent())


def test_flat_round_trip():
    for Q in cubes_of(2, 3):
        assert DyadicCube.from_flat(Q.level, Q.flat(), 2) == Q


def test_all_cubes_count():
    assert sum(1 for _ in all_cubes(1, 4)) == 31
    assert sum(1 for _ in all_cubes(2, 2)) == 1 + 4 + 16


def test_average_constant():
    g = WeightGrid.constant(2, 3)
    assert average(g, DyadicCube(1, (1, 0))) == 1.0


def test_average_mass_conservation():
    g = WeightGrid(1, 1, np.array([2.0, 0.0]))
    assert average(g, DyadicCube.root(1)) == 1.0


@pytest.mark.parametrize("d,L", [(1, 5), (2, 3), (3, 2)])
def test_average_matches_loop(rng, d, L):
    g = random_grid(rng, d, L)
    for Q in cubes_of(d, L):
        assert average(g, Q) == pytest.approx(loop_average(g.cells, Q, L), rel=1e-12, abs=0)


def test_level_averages_match_average(rng):
    g = random_grid(rng, 2, 3)
    for level in range(4):
        vals = level_averages(g, level)
        for Q in cubes_of(2, level):
            if Q.level == level:
                assert vals[Q.flat()] == pytest.approx(average(g, Q), rel=1e-12)


def test_weighted_average_cases(rng):
    w = random_grid(rng, 1, 4)
    Q = DyadicCube(2, (1,))
    assert weighted_average(np.full(16, 3.0), w, Q) == pytest.approx(3.0)
    g = random_grid(rng, 1, 4)
    assert weighted_average(g.cells, WeightGrid.constant(1, 4), Q) == pytest.approx(average(g, Q))


def test_weighted_average_loop(rng):
    w, g = random_grid(rng, 2, 2), random_grid(rng, 2, 2)
    for Q in cubes_of(2, 2):
        idx = cell_indices(Q, 2, 2)
        num = sum(g.cells[i] * w.cells[i] for i in idx)
        den = sum(w.cells[i] for i in idx)
        assert weighted_average(g.cells, w, Q) == pytest.approx(num / den, rel=1e-12)


def test_cube_samples():
    g = WeightGrid(1, 2, np.arange(1.0, 5.0))
    vals, m = cube_samples(g.cells, DyadicCube.root(1))
    assert vals.size == 4 and np.all(m == 0.25)
    vals, m = cube_samples(g.cells, DyadicCube(2, (3,)))
    assert vals.tolist() == [4.0] and m.tolist() == [1.0]


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_adapter_power_exact(rng, p):
    pp = p / (p - 1)
    g = random_grid(rng, 1, 5)
    for Q in cubes_of(1, 5):
        vals, m = cube_samples(g.cells ** (1 / pp), Q)
        got = luxembourg_norm((vals, m), power(pp))
        assert got == pytest.approx(average(g, Q) ** (1 / pp), rel=1e-9)


def test_all_levels_matches_per_level(rng):
    g = random_grid(rng, 2, 4, 2.0)
    A = log_bump(2.0, 1.0)
    batched = orlicz_all_levels(g.cells, A)
    for level in range(5):
        np.testing.assert_allclose(batched[level], level_orlicz(g.cells, A, level), rtol=1e-9)


def test_broadcast_level():
    out = broadcast_level(np.array([1.0, 2.0]), 1, 1, 2)
    assert out.tolist() == [1.0, 1.0, 2.0, 2.0]


def test_invalid_grid():
    with pytest.raises((GridError, ValueError)):
        WeightGrid(1, 2, np.array([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises((GridError, ValueError)):
        WeightGrid(1, 2, np.ones(3))

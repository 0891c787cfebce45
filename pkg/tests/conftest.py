"""Shared fixtures and brute-force oracles written independently of the library loops."""

import itertools

import numpy as np
import pytest

from bumplab.grid import DyadicCube, WeightGrid


def cubes_of(d, L):
    for level in range(L + 1):
        for idx in itertools.product(range(1 << level), repeat=d):
            yield DyadicCube(level, idx)


def cell_indices(Q, d, L):
    """Finest-cell multi-indices inside Q, by explicit enumeration."""
    b = 1 << (L - Q.level)
    ranges = [range(i * b, (i + 1) * b) for i in Q.index]
    return list(itertools.product(*ranges))


def loop_average(cells, Q, L):
    idx = cell_indices(Q, cells.ndim, L)
    return sum(float(cells[i]) for i in idx) / len(idx)


def lam_scan(values, masses, A, lo, hi, n=200_001):
    """Smallest lambda on a fine geometric grid with sum A(v/lambda) m <= 1."""
    lams = np.geomspace(lo, hi, n)
    vals = np.asarray(values, dtype=float)[None, :] / lams[:, None]
    totals = np.asarray(A(vals.ravel())).reshape(vals.shape) @ np.asarray(masses, dtype=float)
    ok = np.nonzero(totals <= 1.0)[0]
    return float(lams[ok[0]]) if ok.size else hi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, d, L, spread=1.0):
    return WeightGrid(d, L, np.exp(rng.normal(0.0, spread, (1 << L,) * d)))

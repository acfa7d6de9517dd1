"""Shared fixtures: loaded scenarios and the slow trajectory batches.

The batch fixtures are session-scoped because several acceptance checks
reuse the same trajectories (terminal confinement, convergence, safety
margins, step-halving comparisons).
"""

import numpy as np
import pytest

from cbflab import IntegratorConfig, batch, load


@pytest.fixture(scope="session")
def ex1():
    return load("example1")


@pytest.fixture(scope="session")
def ex2():
    return load("example2")


@pytest.fixture(scope="session")
def ex3():
    return load("example3")


@pytest.fixture(scope="session")
def ex5():
    return load("example5")


@pytest.fixture(scope="session")
def ex6():
    return load("example6")


def sample_states(box, count, seed):
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((count, len(box)))


@pytest.fixture(scope="session")
def ex3_batches(ex3):
    """example3 ring trajectories, keyed by p."""
    cfg = IntegratorConfig()
    return {p: batch(ex3, "original", p, ex3.starts, cfg) for p in (1.0, 10.0, 100.0)}


@pytest.fixture(scope="session")
def ex6_batches(ex6):
    """example6 modified-controller ring trajectories, keyed by p."""
    cfg = IntegratorConfig()
    return {p: batch(ex6, "modified", p, ex6.starts, cfg) for p in (0.1, 1.0, 10.0)}

"""Shared fixtures: measures, cached free-convolution solutions, and a bank
of reusable Monte Carlo realizations so acceptance criteria can share runs."""

import numpy as np
import pytest

from defsc import freeconv, measure, rmt


@pytest.fixture(scope="session")
def uniform_mu():
    return measure.uniform()


@pytest.fixture(scope="session")
def jacobi11():
    return measure.make_jacobi(1.0, 1.0, [1.0])


@pytest.fixture(scope="session")
def jacobi22():
    return measure.make_jacobi(2.0, 2.0, [1.0])


@pytest.fixture(scope="session")
def delta1():
    return measure.delta(1.0)


@pytest.fixture(scope="session")
def two_atom():
    return measure.symmetric_two_atom()


_SOLUTIONS = {}


@pytest.fixture(scope="session")
def solution_cache(uniform_mu, jacobi11, jacobi22, delta1, two_atom):
    """solution(name, lam) -> FreeConvolutionSolution, memoized per session."""
    measures = {
        "uniform": uniform_mu,
        "jacobi11": jacobi11,
        "jacobi22": jacobi22,
        "delta1": delta1,
        "two_atom": two_atom,
    }

    def get(name, lam):
        key = (name, lam)
        if key not in _SOLUTIONS:
            _SOLUTIONS[key] = freeconv.FreeConvolutionSolution(measures[name], lam)
        return _SOLUTIONS[key]

    return get


class EnsembleBank:
    """Memoized eigenvalue-only realizations keyed by (n, lam, seed)."""

    def __init__(self, mu):
        self.mu = mu
        self._runs = {}

    def runs(self, n, lam, trials, seed):
        key = (n, lam, seed)
        have = self._runs.setdefault(key, [])
        while len(have) < trials:
            cfg = rmt.EnsembleConfig(
                n_size=n, lam=lam, mu=self.mu, seed=seed, trial_index=len(have)
            )
            have.append(rmt.realize(cfg))
        return have[:trials]


@pytest.fixture(scope="session")
def uniform_bank(uniform_mu):
    return EnsembleBank(uniform_mu)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow-only",
        action="store_true",
        default=False,
        help="run only tests marked slow",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow-only"):
        skip = pytest.mark.skip(reason="fast test skipped by --runslow-only")
        for item in items:
            if "slow" not in item.keywords:
                item.add_marker(skip)

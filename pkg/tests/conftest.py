import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tgmcmc import CrmPrior, GaussianWishart  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dp():
    return CrmPrior.dirichlet(1.0)


@pytest.fixture
def nggp():
    return CrmPrior.generalized_gamma(1.0, 0.5)


def gaussian_setup(X):
    model = GaussianWishart.from_data(X)
    return model, model.prepare(X)


@pytest.fixture
def small_gauss(rng):
    X = np.concatenate([rng.normal(0, 1, (4, 2)), rng.normal(3, 1, (4, 2))])
    return (X,) + gaussian_setup(X)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)

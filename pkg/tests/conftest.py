import sys

import numpy as np
import pytest

from weakvar import states
from weakvar.numerics import Grid

C = states.PhysicalConstants()


def make(kind, grid, constants=C, **params):
    return states.build(states.ModelSpec(kind, params), grid, constants)


@pytest.fixture(scope="session")
def coherent():
    return make("coherent_state", Grid(-16, 16, 1024), omega=1.0, x_mean=0.5, p_mean=0.3)


@pytest.fixture(scope="session")
def qho2():
    return make("qho_eigenstate", Grid(-16, 16, 1024), n=2, omega=1.0)


@pytest.fixture(scope="session")
def cat():
    # equal-weight, in-phase pair: density minimum at 0 without a node
    return make("two_gaussian_superposition", Grid(-16, 16, 1024), separation=6.0, sigma=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)

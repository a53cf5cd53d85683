import pytest

from burstpdmp.model import ConstantRate, ExponentialJumps, HillRate, Model, ModelParams, fig1_family, FIG1_HILL

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def constant_model():
    return Model(ModelParams(10.0, 1.0, 2.0), ConstantRate(2.0), ExponentialJumps(1.0))


@pytest.fixture
def hill_model():
    return Model(ModelParams(1.0, 1.0, 2.0), HillRate(**FIG1_HILL), ExponentialJumps(0.5))


@pytest.fixture
def fig1():
    return fig1_family()

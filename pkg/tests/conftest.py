from dataclasses import replace

import pytest

from droopsim.engine import Models, Scenario
from droopsim.sizing import run_grid

REFERENCE_GRID = (0.0, 60.0, 90.0, 140.0)

# lines appended by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def default_grid():
    """Default-scenario runs over the reference damping values, keyed by k_d."""
    rows = run_grid(REFERENCE_GRID, Scenario(), Models(), jobs=1)
    return {kd: (result, metrics) for kd, result, metrics in rows}


@pytest.fixture
def short_scenario():
    return Scenario(t_end=4.0, t_step=1.0)


def models_with_kd(k_d, models=None):
    models = models or Models()
    return replace(models, droop=replace(models.droop, k_d=float(k_d)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

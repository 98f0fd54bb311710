from __future__ import annotations

import numpy as np
import pytest

from backmc.lorentz import LorentzProblem
from backmc.sde import DiffusionModel


@pytest.fixture(scope="session")
def problem() -> LorentzProblem:
    return LorentzProblem(-0.9, 0.1)


@pytest.fixture(scope="session")
def series(problem):
    return problem.series()


@pytest.fixture(scope="session")
def phi(problem, series):
    return problem.phi(series)


def _zero(x):
    return 0.0


@pytest.fixture(scope="session")
def frozen_model() -> DiffusionModel:
    """D identically zero: no drift, no noise."""
    return DiffusionModel(_zero, _zero, name="frozen")


def smooth_phi(x):
    """A gentle, low-curvature initial condition for deposition tests."""
    return 0.5 + 0.25 * np.cos(0.5 * np.pi * np.asarray(x, dtype=np.float64))


#: verdict lines recorded by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import math

import numpy as np
import pytest

from beamforge import (
    BeamDomain, BeamProblem, CoefficientField, ForwardModel, TipGeometry, benchmark_spec,
)


@pytest.fixture(scope="session")
def problem1():
    return benchmark_spec("test1").problem


@pytest.fixture(scope="session")
def problem2():
    return benchmark_spec("test2").problem


@pytest.fixture(scope="session")
def unit_problem():
    """Unit coefficients, light damping: a non-stiff beam for scheme-level checks."""
    c = CoefficientField.constant
    return BeamProblem(BeamDomain(1.0, 1.0), rho_a=c(1.0), mu=c(0.5), r=c(1.0), kappa=c(0.05),
                       tip=TipGeometry(0.2, math.pi / 36))


@pytest.fixture(scope="session")
def model1_small(problem1):
    return ForwardModel(problem1, 20)


@pytest.fixture(scope="session")
def model2_small(problem2):
    return ForwardModel(problem2, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_VERDICTS_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def verdict(request):
    """Record one PASS/FAIL line for the end-of-run summary and echo it immediately."""
    lines = request.config.stash.setdefault(_VERDICTS_KEY, [])
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

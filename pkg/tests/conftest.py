import numpy as np
import pytest

from radaupde.problems import MeshConfig, burgers_problem, heat_problem, transcribe

# acceptance outcomes, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")


def random_point(tr, rng, low=0.5, high=1.5):
    z = rng.uniform(low, high, tr.layout.size)
    z[-2], z[-1] = tr.problem.t0, tr.problem.tf
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_burgers():
    return transcribe(burgers_problem(), MeshConfig(3, 2, 5))


@pytest.fixture
def small_heat():
    return transcribe(heat_problem(), MeshConfig(3, 2, 5))

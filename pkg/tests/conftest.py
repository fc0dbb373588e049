import numpy as np
import pytest

from railalloc.geometry import Point2D, Scenario, make_scenario
from railalloc.radio import LinkBudget, RadioParams
from railalloc.sqp import capacity_problem


def symmetric_scenario(offsets=((0, 50), (0, -40))):
    """BS and one relay with mirror-image user sets."""
    bs, mr = Point2D(100.0, 100.0), Point2D(300.0, 100.0)
    users = [(bs.x + dx, bs.y + dy) for dx, dy in offsets]
    users += [(mr.x + dx, mr.y + dy) for dx, dy in offsets]
    assoc = [0] * len(offsets) + [1] * len(offsets)
    return Scenario(400.0, bs, (mr,), np.array(users), np.array(assoc), seed=0)


@pytest.fixture
def table_params():
    return RadioParams.from_table()


@pytest.fixture
def symmetric_problem():
    budget = LinkBudget(symmetric_scenario(), 1.2e9, RadioParams.from_table(beta=0.0))
    return capacity_problem(budget)


@pytest.fixture(scope="session")
def table_scenario():
    return make_scenario(seed=3)


# criterion number -> (passed, detail); filled by the acceptance module
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)
    print(f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:>2} {'PASS' if passed else 'FAIL'}  {detail}")

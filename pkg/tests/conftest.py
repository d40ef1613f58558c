from __future__ import annotations

from fractions import Fraction

import pytest

from readop.schedule import Lp, build_schedule, desk_params, theorem1_desk_params
from readop.variants import build_hilbert, build_theorem1


@pytest.fixture(scope="session")
def desk():
    """Single-interval desk build: p = 1, Z = c0, eps = 1/2, alpha = 1/4, two steps."""
    return build_schedule(desk_params())


@pytest.fixture(scope="session")
def desk_one_step():
    return build_schedule(desk_params(n_max=1))


@pytest.fixture(scope="session")
def desk_l2():
    return build_schedule(desk_params(space=Lp(Fraction(2))))


@pytest.fixture(scope="session")
def th1():
    return build_theorem1(theorem1_desk_params())


@pytest.fixture(scope="session")
def th1_three():
    return build_theorem1(theorem1_desk_params(n_max=3, budget=2**128))


@pytest.fixture(scope="session")
def hilbert():
    return build_hilbert(Fraction(1, 2), 2)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> one-line verdict, printed in the terminal summary."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])

import pytest

from helpers import RESULTS
from superint.principal_ode import NearestTo, PrincipalParams, UniquePositive, solve_profile


@pytest.fixture(scope="session")
def sinh_profile():
    p = PrincipalParams("ii", 1, 0, 0, 0, 1, mu=1)
    return solve_profile(p, 0.0, 0.0, NearestTo(1.0), (-2.0, 2.0), n=401)


@pytest.fixture(scope="session")
def sin_profile():
    p = PrincipalParams("i", 1, 0, 0, 0, 1, mu=1)
    return solve_profile(p, 0.0, 0.0, NearestTo(1.0), (-1.0, 1.0), n=201)


@pytest.fixture(scope="session")
def flat_profile():
    p = PrincipalParams("iii", 1, 0, 0, 0, 1)
    return solve_profile(p, 0.0, 0.0, UniquePositive(), (-2.0, 2.0), n=401)


@pytest.fixture(scope="session")
def generic_iii_profile():
    p = PrincipalParams("iii", 1, 0.3, 0.5, 0.2, 1)
    return solve_profile(p, 0.0, 0.1, UniquePositive(), (-1.0, 1.0), n=201)


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

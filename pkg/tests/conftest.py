import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from apfsm import load_model  # noqa: E402
from apfsm.scenario import desk_params, generate_model  # noqa: E402

_acceptance = []


@pytest.fixture(scope="session")
def desk_model():
    return load_model(generate_model(desk_params()))


@pytest.fixture(scope="session")
def desk_interval_model():
    return load_model(generate_model(desk_params(t_ap=(3, 4), b_ap=(2, 3))))


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = report.nodeid.split("::")[-1]
        _acceptance.append(f"ACCEPTANCE {'PASS' if report.passed else 'FAIL'} {name}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance:
            terminalreporter.write_line(line)

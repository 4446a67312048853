import pytest

from sdag.demo import build_demo

import acceptance_report


@pytest.fixture(scope="session")
def demo():
    return build_demo()


def pytest_terminal_summary(terminalreporter):
    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.LINES:
            terminalreporter.write_line(line)

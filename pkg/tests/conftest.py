import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# one "ACCEPTANCE n (name): PASS|FAIL" line per acceptance test, printed in
# the terminal summary so the verdicts survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

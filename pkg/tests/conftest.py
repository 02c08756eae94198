import sys
from pathlib import Path

import pytest

HELPERS = Path(__file__).parent / "helpers"
MOCK_ORACLE = HELPERS / "mock_remote_oracle.py"

_acceptance_outcomes: list[tuple[str, str, str]] = []


def mock_oracle_cmd(*flags: str) -> str:
    """Shell command that launches the scripted mock oracle."""
    parts = [sys.executable, str(MOCK_ORACLE), *flags]
    return " ".join(parts)


@pytest.fixture
def mock_cmd():
    return mock_oracle_cmd


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    _acceptance_outcomes.append(
        (f"{number:02d}", title, ("PASS" if passed else "FAIL") + (f" ({detail})" if detail else ""))
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome in sorted(_acceptance_outcomes):
        terminalreporter.write_line(f"criterion {number} [{title}]: {outcome}")

"""Shared fixtures and the per-criterion summary printed after the acceptance run."""
import pytest

from wlaplab.spaces import make_space

ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Register the outcome of one acceptance criterion (called before asserting)."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def fano_spaces():
    return {p: make_space(f"fano-cp1:pert={p}")
            for p in ("0", "0.2", "0.1;-0.15", "0.05;0.1;0.2")}

import pytest

from qmbe.params import DEMO_PARAMS

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def demo():
    return DEMO_PARAMS


@pytest.fixture
def record_criterion():
    """Register one acceptance line; printed in the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

import pytest

_LINES = []


@pytest.fixture
def verdict(capsys):
    """Record and print one acceptance line, then assert it."""
    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {detail}"
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


@pytest.fixture
def note(capsys):
    """Informational acceptance line; never fails."""
    def record(number: int, detail: str):
        line = f"INFO  criterion {number:2d}  {detail}"
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and assert on it."""

    def record(k: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _LINES[k] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])

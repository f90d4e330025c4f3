import pytest

_RESULTS = []


@pytest.fixture
def record():
    """Log one acceptance line; the test still asserts on its own."""

    def _record(number: int, title: str, ok: bool, detail: str = ""):
        _RESULTS.append((number, title, bool(ok), detail))
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_RESULTS):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)

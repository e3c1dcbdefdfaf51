import pytest

_LINES = []


@pytest.fixture
def accept(request):
    """Record one PASS/FAIL line for an end-to-end acceptance check."""

    def _record(ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}"
        _LINES.append(line)
        print(line, flush=True)
        assert ok, detail

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _LINES:
        terminalreporter.section("acceptance checks")
        for line in _LINES:
            terminalreporter.write_line(line)

import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def report_line(request):
    """Record one PASS/FAIL line that is echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(label, ok, detail):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import pytest

_LINES = pytest.StashKey()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def record(request):
    """record(n, ok, detail): one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_LINES]

    def _record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[n] = line
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])

import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one criterion line: acceptance(number, title, passed, measured, tolerance)."""
    lines = request.config.stash[ACCEPTANCE]

    def record(number, title, passed, measured, tolerance):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {measured} (tolerance {tolerance})"
        print(line)
        lines.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)

import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion.

    Lines are printed at once and repeated in the terminal summary, so they
    show up even when pytest captures output.
    """

    def record(number: int, passed: bool, measured: str, tolerance: str, seconds: float):
        line = (f"{'PASS' if passed else 'FAIL'} criterion {number}: {measured} "
                f"(tolerance {tolerance}) [{seconds:.1f} s]")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

import pytest

_CRITERIA = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line for an acceptance criterion; all lines print at the end."""

    def record(label, passed, detail):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

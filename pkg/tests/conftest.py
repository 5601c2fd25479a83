import pytest

ACCEPTANCE = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, ok, text):
        line = f"{'PASS' if ok else 'FAIL'}  C{number:<2d} {text}"
        ACCEPTANCE.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

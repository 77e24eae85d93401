import pytest

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, title, ok, seconds, detail=""):
        ACCEPTANCE[number] = (title, bool(ok), seconds, detail)
        print(f"\n{_line(number, title, ok, seconds, detail)}")
        return ok
    return record


def _line(number, title, ok, seconds, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({seconds:.1f} s) {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(_line(number, *ACCEPTANCE[number]))

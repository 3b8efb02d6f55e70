import os
import sys

# fixtures are referenced relative to the repository root
os.chdir(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

RESULTS = {}


def record(number, ok, detail):
    """Remember one acceptance line; printed at the end of the session."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS[number] = line
    print(line, file=sys.stderr)
    return ok


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])

"""Collects one verdict line per acceptance criterion and prints them at the end."""

import pytest

VERDICTS = []


@pytest.fixture
def verdict():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

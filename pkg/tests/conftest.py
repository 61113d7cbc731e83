"""Shared pytest hooks.

The acceptance tests register one verdict line per criterion; echoing them
in a terminal section after the run keeps the pass/fail record visible even
though pytest captures test stdout.
"""

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(line)

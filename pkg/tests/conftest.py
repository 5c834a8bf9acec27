"""Shared pytest hooks.

Collects the acceptance-criterion verdicts recorded by
``tests/test_acceptance.py`` and echoes them in the terminal summary, so
each ``ACCEPTANCE n: PASS|FAIL`` line is visible in the run log even for
passing tests (whose captured stdout pytest normally discards).
"""

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(line)

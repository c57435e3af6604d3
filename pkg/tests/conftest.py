import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=acceptance_log.order):
            terminalreporter.write_line(line)

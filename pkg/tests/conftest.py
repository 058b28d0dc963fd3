import os

import pytest

from . import acceptance_log


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TILETUNE_MEASURED") == "1":
        return
    skip = pytest.mark.skip(reason="measured run; set TILETUNE_MEASURED=1")
    for item in items:
        if "measured" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)

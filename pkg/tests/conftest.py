import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {}  # number -> {"title": str, "outcomes": [bool], "notes": [str]}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.fixture
def measured(request):
    """Append ``key=value`` notes to the acceptance summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def note(**values):
        if marker is None:
            return
        entry = CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "outcomes": [], "notes": []})
        entry["notes"].extend(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry = CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "outcomes": [], "notes": []})
        entry["outcomes"].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        entry = CRITERIA[number]
        status = "PASS" if entry["outcomes"] and all(entry["outcomes"]) else "FAIL"
        line = f"criterion {number:2d} {status}  {entry['title']}"
        if entry["notes"]:
            line += "  [" + ", ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)

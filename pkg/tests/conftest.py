"""Per-criterion PASS/FAIL summary for tests marked ``criterion(n, title)``."""

import pytest

_outcomes = {}
_titles = {}
_RANK = {"skipped": 0, "passed": 1, "failed": 2}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number = marker.args[0]
    _titles.setdefault(number, marker.args[1] if len(marker.args) > 1 else "")
    result = "skipped" if report.skipped else report.outcome
    # a failure anywhere sticks; a pass outranks a skip
    if _RANK[result] >= _RANK.get(_outcomes.get(number), -1):
        _outcomes[number] = result


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[_outcomes[number]]
        terminalreporter.write_line(f"criterion {number}: {status}  {_titles[number]}")

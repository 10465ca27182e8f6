from __future__ import annotations

import pytest

_RESULTS: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[number] = (title, "PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, verdict, secs = _RESULTS[number]
        terminalreporter.write_line(f"{verdict}  criterion {number:>2}: {title} ({secs:.2f} s)")

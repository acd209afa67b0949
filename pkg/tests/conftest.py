"""Collects the outcome of every acceptance criterion and prints one line
per criterion at the end of the run."""
import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _RESULTS[number] = (title, rep.passed, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, duration = _RESULTS[number]
        tr.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title} "
                      f"({duration:.1f} s)")

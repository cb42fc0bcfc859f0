import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> [(title, test name, passed, detail)]
_CRITERIA = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = mark.args
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[number].append((title, item.name, report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        ok = all(c[2] for c in checks)
        title = checks[0][0]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title}")
        for _, name, passed, detail in checks:
            flag = "ok  " if passed else "FAIL"
            tr.write_line(f"        {flag} {name}" + (f": {detail}" if detail else ""))

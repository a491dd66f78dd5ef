import re
from collections import defaultdict

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_outcomes: dict[int, list[str]] = defaultdict(list)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[int(m.group(1))].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        seen = _outcomes[n]
        if "failed" in seen:
            status = "FAIL"
        elif all(s == "skipped" for s in seen):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"{status} criterion {n}")

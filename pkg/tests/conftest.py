_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = (mark.args[0], mark.args[1], "NOT RUN")


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    number, title, status = _CRITERIA[report.nodeid]
    if report.failed:
        status = "FAIL"
    elif report.when == "call" and report.passed and status != "FAIL":
        status = "PASS"
    elif report.skipped:
        status = "SKIP"
    _CRITERIA[report.nodeid] = (number, title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    # parametrized cases of one criterion collapse to a single line
    merged = {}
    rank = {"FAIL": 3, "NOT RUN": 2, "SKIP": 1, "PASS": 0}
    for number, title, status in _CRITERIA.values():
        old = merged.get(number, (title, "PASS"))[1]
        merged[number] = (title, max(old, status, key=rank.get))
    terminalreporter.section("acceptance criteria")
    for number in sorted(merged):
        title, status = merged[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")

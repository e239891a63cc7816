import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or report.failed:
        notes = [v for k, v in item.user_properties if k == "detail"]
        entry = _RESULTS.setdefault(n, {"title": title, "passed": True, "notes": []})
        entry["passed"] &= report.passed
        entry["notes"].extend(notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        r = _RESULTS[n]
        line = f"criterion {n:2d} {'PASS' if r['passed'] else 'FAIL'}  {r['title']}"
        if r["notes"]:
            line += "  [" + "; ".join(r["notes"]) + "]"
        terminalreporter.write_line(line)

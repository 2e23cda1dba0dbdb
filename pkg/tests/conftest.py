import pytest

# criterion number -> (title, verdict), filled as acceptance tests report
_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        verdict = "PASS" if report.passed else "FAIL"
        # a criterion split over several tests passes only if all of them do
        if _ACCEPTANCE.get(num, (title, "PASS"))[1] == "FAIL":
            verdict = "FAIL"
        _ACCEPTANCE[num] = (title, verdict)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, verdict = _ACCEPTANCE[num]
        terminalreporter.write_line(f"{verdict}  #{num} {title}")

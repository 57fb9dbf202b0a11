"""Collect the acceptance summary lines and print them at the end of the run."""

_SUMMARY = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call":
        lines = [v for k, v in report.user_properties if k == "summary"]
        if lines:
            _SUMMARY.extend(lines)
        elif report.failed:
            _SUMMARY.append(f"FAIL {report.nodeid.split('::')[-1]}: raised before reporting")
    elif report.when == "setup" and report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        _SUMMARY.append(f"SKIP {report.nodeid.split('::')[-1]}: {reason}")


def pytest_terminal_summary(terminalreporter):
    if not _SUMMARY:
        return
    terminalreporter.section("acceptance criteria")
    for line in _SUMMARY:
        terminalreporter.write_line(line)

import test_acceptance


def pytest_terminal_summary(terminalreporter):
    lines = test_acceptance.SUMMARY
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])

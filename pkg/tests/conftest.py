def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, printed after the
    run so the gate's outcome is visible without digging into captured
    output."""
    try:
        from test_acceptance import CRITERIA_LOG
    except ImportError:
        return
    if not CRITERIA_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERIA_LOG:
        terminalreporter.write_line(line)

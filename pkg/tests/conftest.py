def pytest_terminal_summary(terminalreporter):
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for key, val in getattr(rep, "user_properties", []):
                if key == "acceptance":
                    lines.append(val)
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(set(lines)):
            terminalreporter.write_line(ln)

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(result) -> None:
    _ACCEPTANCE_LINES.append(result.line())


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(set(_ACCEPTANCE_LINES), key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)

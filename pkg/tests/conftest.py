"""Shared pytest hooks: collect acceptance verdict lines and echo them at the end."""

GATE_LINES: list[str] = []


def gate(criterion: int, passed: bool, detail: str) -> bool:
    """Record and print one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    GATE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if GATE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in GATE_LINES:
            terminalreporter.write_line(line)

import sys


def pytest_terminal_summary(terminalreporter):
    for module in list(sys.modules.values()):
        lines = getattr(module, "ACCEPTANCE_LINES", None)
        if isinstance(lines, dict) and lines:
            terminalreporter.section("acceptance criteria")
            for key in sorted(lines):
                terminalreporter.write_line(lines[key])
            return

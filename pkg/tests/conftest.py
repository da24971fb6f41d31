import pytest

_VERDICTS = []


@pytest.fixture()
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number, title, ok, detail=""):
        line = f"ACCEPTANCE {number:>2} {'SKIP' if ok is None else 'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

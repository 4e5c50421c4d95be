import pytest

_CRITERIA = {}


class CriterionLog:
    """Collects one verdict line per acceptance criterion."""

    def record(self, number, ok, detail):
        _CRITERIA[number] = (bool(ok), detail)
        return ok


@pytest.fixture(scope="session")
def criterion_log():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

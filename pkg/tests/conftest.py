import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and fail on FAIL."""

    def _report(number: int, ok: bool, detail: str, elapsed: float | None = None):
        timing = "" if elapsed is None else f" [{elapsed:.1f} s]"
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}{timing}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])

import pytest

_ACCEPTANCE_LINES = []


def record_criterion(number, description, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    _ACCEPTANCE_LINES.append(
        (number, f"criterion {number:2d} [{status}] {description}{suffix}"))


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome and assert it.

    Usage: criterion(3, "NISP anti-aliasing", err < 1e-10, detail=...).
    """

    def check(number, description, passed, detail=""):
        record_criterion(number, description, bool(passed), detail)
        assert passed, f"criterion {number}: {description} — {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)

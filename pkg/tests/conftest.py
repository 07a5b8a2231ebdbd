import pytest

_LINES: list[str] = []


class AcceptanceLog:
    """Collects one line per acceptance criterion for the terminal summary."""

    def record(self, criterion: str, what: str, value: float, tol: float, ok: bool,
               op: str = "<=") -> bool:
        status = "PASS" if ok else "FAIL"
        _LINES.append(f"[{status}] criterion {criterion}: {what} = {value:.4g} ({op} {tol:.4g})")
        return ok

    def info(self, criterion: str, text: str) -> None:
        _LINES.append(f"[INFO] criterion {criterion}: {text}")


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

import pytest

# acceptance verdicts, echoed in the terminal summary so they land in saved logs
VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(number: str, ok, detail: str) -> None:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        VERDICTS.append(f"criterion {number}: {status}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)

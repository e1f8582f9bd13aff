"""Collects the acceptance verdicts and prints them at the end of the run."""
import pytest

_RESULTS: dict[int, tuple[bool, str, str]] = {}


class AcceptanceLog:
    def record(self, number: int, title: str, passed: bool, detail: str) -> None:
        _RESULTS[number] = (bool(passed), title, detail)
        print(f"\ncriterion {number} {'PASS' if passed else 'FAIL'}: {title}; {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, title, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}; {detail}")

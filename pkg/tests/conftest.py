import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; the test itself still asserts."""
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(ACCEPTANCE[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])

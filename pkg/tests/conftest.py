import pytest

# criterion number -> list of (part, ok, detail), filled by the acceptance suite
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def log(number, part, ok, detail):
        ACCEPTANCE.setdefault(number, []).append((part, bool(ok), detail))
        print(f"criterion {number} [{part}]: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return log


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}")
        for part, good, detail in parts:
            terminalreporter.write_line(f"    {'ok  ' if good else 'FAIL'} {part}: {detail}")

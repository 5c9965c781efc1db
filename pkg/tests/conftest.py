import pytest

# criterion -> (passed, summary line); filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[criterion][1])
    passed = sum(ok for ok, _ in ACCEPTANCE_LINES.values())
    terminalreporter.write_line(f"{passed}/{len(ACCEPTANCE_LINES)} criteria passed")


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES

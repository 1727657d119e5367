import pytest

from persona_dialog.kb import generate_kb


@pytest.fixture(scope="session")
def halves():
    return generate_kb(0)


@pytest.fixture(scope="session")
def kb_a(halves):
    return halves[0]


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Records one summary line per acceptance criterion."""
    def record(line: str):
        print(line)
        request.config.acceptance_lines.append(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import pytest
from hypothesis import settings

from warmnet import ModelParams

# Wall-clock deadlines are noise on a loaded single core.
settings.register_profile("warmnet", deadline=None)
settings.load_profile("warmnet")

_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture
def params():
    return ModelParams(3, 1.5, 0.2, 7)


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_REPORT_KEY]

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

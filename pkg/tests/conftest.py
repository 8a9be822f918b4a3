import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS.append((name, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, status in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status}  {name}")

from portopt.data import ReturnPanel, to_nominal_returns, to_real_returns
from portopt.fixture import generate_fixture

FIXTURE_SEED = 7


@pytest.fixture(scope="session")
def fixture_panel() -> ReturnPanel:
    """The bundled synthetic real-return panel, generated once per session."""
    _, _, panel = generate_fixture(FIXTURE_SEED)
    return panel


@pytest.fixture(scope="session")
def fixture_files(tmp_path_factory):
    """Fixture CSVs on disk plus the panel they encode."""
    from portopt.fixture import write_fixture

    out = tmp_path_factory.mktemp("fixture")
    prices, cpi = write_fixture(out, FIXTURE_SEED)
    return prices, cpi

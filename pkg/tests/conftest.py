from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
TEXTGRIDS = FIXTURES / "textgrids"
GOLDEN = FIXTURES / "golden"
FIXTURE_LANGS = ("de", "en", "es", "cs")

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(autouse=True)
def _no_table_env(monkeypatch):
    monkeypatch.delenv("PHQ2_TABLE", raising=False)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])

from __future__ import annotations

from pathlib import Path

import pytest

from esgcheck.cli import bundled_checklist
from esgcheck.core import StandardId
from esgcheck.ingest import load_document
from esgcheck.llm import LLMClient, MockBackend, PriceTable
from esgcheck.validators import HeuristicResponder

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

_acceptance: list[tuple[int, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _acceptance.append((marker.args[0], marker.args[1], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict in sorted(_acceptance):
        terminalreporter.write_line(f"{verdict} criterion {number}: {title}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def gri():
    return bundled_checklist(StandardId.parse("gri"))


@pytest.fixture(scope="session")
def report_a():
    return load_document(FIXTURES / "reports" / "report-a.md", "report-a")


@pytest.fixture(scope="session")
def report_b():
    return load_document(FIXTURES / "reports" / "report-b.md", "report-b")


@pytest.fixture
def heuristic_llm() -> LLMClient:
    return LLMClient(MockBackend(responder=HeuristicResponder()), PriceTable.default())

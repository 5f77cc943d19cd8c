from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def flash():
    from civitas.scenario import parse_scenario

    return parse_scenario((FIXTURES / "flash.city").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def consentless():
    from civitas.scenario import parse_facts

    return parse_facts((FIXTURES / "consentless.facts").read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

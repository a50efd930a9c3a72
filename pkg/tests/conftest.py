from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
CORPUS = sorted((FIXTURES / "corpus").glob("*.opl"))
TELEMETRY = sorted((FIXTURES / "telemetry").glob("*.csv"))

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def pcb_text() -> str:
    return (FIXTURES / "pcb_line.opl").read_text(encoding="utf-8")


@pytest.fixture
def pcb_model(pcb_text):
    from factoryopm.opl import parse_document

    model, diags = parse_document(pcb_text, name="pcb_line")
    assert not [d for d in diags if d.severity == "error"]
    return model


@pytest.fixture(scope="session")
def shift():
    from factoryopm.telemetry import ingest

    dataset, diags = ingest(TELEMETRY)
    assert diags == []
    return dataset


@pytest.fixture(scope="session")
def pcb_spec():
    from factoryopm.kpi import load_spec

    return load_spec(FIXTURES / "pcb_kpi.yaml")


@pytest.fixture(scope="session")
def pcb_inventory():
    from factoryopm.lca import load_inventory

    return load_inventory(FIXTURES / "lca" / "pcb_inventory.csv")


@pytest.fixture(scope="session")
def matrix():
    from factoryopm.lca import load_matrix

    return load_matrix(FIXTURES / "lca" / "fixture_matrix.csv")


def pytest_terminal_summary(terminalreporter):
    from acceptance_lines import RESULTS, line

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(line(n))

from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from qubit_pcm import ingest
from qubit_pcm.config import load_config

FIXTURES = Path(__file__).parent / "fixtures"
REPLICA = FIXTURES / "reference_wafer"

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def replica_manifest():
    return ingest.load_manifest(REPLICA / "manifest.json")


@pytest.fixture(scope="session")
def replica_dataset(replica_manifest):
    return ingest.load_dataset(replica_manifest)


@pytest.fixture(scope="session")
def replica_config():
    return load_config(REPLICA / "config.json")


@pytest.fixture(scope="session")
def replica_report(replica_manifest, replica_config):
    from qubit_pcm.report import run_pipeline
    return run_pipeline(replica_manifest, replica_config).report


def read_json(path: Path):
    return json.loads(Path(path).read_text())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

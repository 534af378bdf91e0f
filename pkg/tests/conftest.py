from __future__ import annotations

from pathlib import Path

import pytest

from rovscope.cli import load_inputs
from rovscope.simnet import run_experiment, scenario_from_dict, write_artifacts


def build_scenario(nodes, sessions, **extra):
    """Scenario from compact node/session dicts (same schema as scenario JSON)."""
    return scenario_from_dict({"nodes": nodes, "sessions": sessions, **extra})


def ingest_artifacts(arts, directory: Path):
    """Round-trip experiment artifacts through the on-disk formats."""
    write_artifacts(arts, directory)
    return load_inputs(directory)


def simulate_and_ingest(scenario, directory: Path):
    arts = run_experiment(scenario.topology, scenario.experiment, scenario.noise)
    data, control = ingest_artifacts(arts, directory)
    return arts, data, control


@pytest.fixture
def artifact_dir(tmp_path):
    d = tmp_path / "artifacts"
    d.mkdir()
    return d


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split("(")[0]), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

from pathlib import Path

import pytest

from podway.scenario import scenario_from_dict

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def small_scenario(network, **over):
    """Scenario dict with short runs; keyword keys are dotted paths."""
    raw = {"network": network, "run": {"horizon": 900.0, "warmup": 120.0, "seed": 3, "trace": True}}
    return scenario_from_dict(raw, SCENARIOS, over)


@pytest.fixture
def grid_net():
    return {"benchmark": "RectGrid", "params": {"rows": 2, "cols": 2}}


# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
CRITERIA = 12


def pytest_terminal_summary(terminalreporter):
    if not any("test_acceptance" in getattr(rep, "nodeid", "")
               for reps in terminalreporter.stats.values() for rep in reps):
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(n, (False, "not reached"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

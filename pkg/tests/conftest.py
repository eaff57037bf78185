import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "data" / "scenarios"
CONSTRAINTS = ROOT / "data" / "constraints"

# exact clocks: no sync error, 1ps tick
PERFECT_CLOCKS = {"sync_precision": "0ps", "tick_length": "1ps"}


def scenario_text(name: str) -> str:
    return (SCENARIOS / f"{name}.andl").read_text(encoding="utf-8")


@pytest.fixture
def listing1_text() -> str:
    return scenario_text("listing1")


@pytest.fixture
def control_text() -> str:
    return scenario_text("control")


@pytest.fixture
def burst_text() -> str:
    return scenario_text("burst")


@pytest.fixture
def listing1_path() -> Path:
    return SCENARIOS / "listing1.andl"


@pytest.fixture
def listing2_path() -> Path:
    return CONSTRAINTS / "listing2.xml"

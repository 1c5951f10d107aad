from __future__ import annotations

import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from casetrack.gate import GateConfig, QualityGate
from casetrack.journal import Journal
from casetrack.regions import Level, Region, RegionRegistry
from casetrack.store import SeriesStore

T0 = datetime(2020, 4, 1, 12, 0, tzinfo=timezone.utc)


def build_registry() -> RegionRegistry:
    registry = RegionRegistry()
    registry.register(Region("US", "United States", Level.COUNTRY, population=328_000_000))
    registry.register(
        Region("US-NY", "New York", Level.DIVISION, parent_id="US", population=19_450_000)
    )
    registry.register(
        Region("US-NY-061", "New York County", Level.SUBDIVISION,
               parent_id="US-NY", population=1_630_000)
    )
    registry.register(
        Region("US-NY-059", "Nassau County", Level.SUBDIVISION,
               parent_id="US-NY", population=1_360_000)
    )
    registry.register(
        Region("US-WA", "Washington", Level.DIVISION, parent_id="US", population=7_610_000)
    )
    registry.register(
        Region("US-WA-033", "King County", Level.SUBDIVISION,
               parent_id="US-WA", population=2_250_000)
    )
    registry.register(Region("IT", "Italy", Level.COUNTRY, population=60_300_000))
    registry.register(
        Region("IT-25", "Lombardia", Level.DIVISION, parent_id="IT",
               name_local="Lombardia", population=10_000_000)
    )
    return registry


@pytest.fixture
def registry() -> RegionRegistry:
    return build_registry()


@pytest.fixture
def store(registry) -> SeriesStore:
    return SeriesStore(registry)


@pytest.fixture
def gate(store, registry) -> QualityGate:
    return QualityGate(store, registry, GateConfig(), Journal())

from __future__ import annotations

import pytest

from casetrack.errors import (
    DuplicateCode,
    LeafParent,
    LevelMismatch,
    UnknownParent,
    UnknownRegion,
)
from casetrack.regions import Level, Region, RegionRegistry


def test_register_and_resolve_division_under_country():
    registry = RegionRegistry()
    registry.register(Region("IT", "Italy", Level.COUNTRY))
    registry.register(Region("IT-25", "Lombardia", Level.DIVISION, parent_id="IT"))
    assert registry.resolve("IT-25").name_en == "Lombardia"
    assert [r.region_id for r in registry.children("IT")] == ["IT-25"]


def test_register_without_parent_fails():
    registry = RegionRegistry()
    with pytest.raises(UnknownParent):
        registry.register(Region("US-NY", "New York", Level.DIVISION, parent_id="US"))


def test_register_twice_fails(registry):
    with pytest.raises(DuplicateCode):
        registry.register(Region("US-NY", "New York", Level.DIVISION, parent_id="US"))


def test_level_mismatch_rejected(registry):
    with pytest.raises(LevelMismatch):
        registry.register(
            Region("US-NY-061-X", "Nested", Level.SUBDIVISION, parent_id="US")
        )
    with pytest.raises(LevelMismatch):
        registry.register(Region("US-XX", "Skip", Level.SUBDIVISION, parent_id="US"))


def test_ensure_unassigned_idempotent(registry):
    first = registry.ensure_unassigned("US-NY")
    second = registry.ensure_unassigned("US-NY")
    assert first.region_id == "US-NY-UNASSIGNED"
    assert first == second
    unassigned_children = [
        c for c in registry.children("US-NY") if c.is_unassigned
    ]
    assert len(unassigned_children) == 1


def test_ensure_unassigned_unknown_parent(registry):
    with pytest.raises(UnknownParent):
        registry.ensure_unassigned("XX")


def test_ensure_unassigned_on_country_is_division_level(registry):
    bucket = registry.ensure_unassigned("US")
    assert bucket.level is Level.DIVISION
    assert bucket.is_unassigned
    assert bucket.parent_id == "US"


def test_ensure_unassigned_rejects_leaf(registry):
    with pytest.raises(LeafParent):
        registry.ensure_unassigned("US-NY-061")


def test_resolve_unknown(registry):
    with pytest.raises(UnknownRegion):
        registry.resolve("XX-99")


def test_children_in_registration_order(registry):
    assert [r.region_id for r in registry.children("US-NY")] == [
        "US-NY-061",
        "US-NY-059",
    ]


def test_negative_population_rejected():
    with pytest.raises(ValueError):
        Region("XX", "Nowhere", Level.COUNTRY, population=-1)


def test_tree_invariants_full_scan(registry):
    registry.ensure_unassigned("US")
    registry.ensure_unassigned("US-NY")
    for region in registry.all_regions():
        if region.level is Level.COUNTRY:
            assert region.parent_id is None
        else:
            parent = registry.resolve(region.parent_id)
            assert parent.level.child_level is region.level
            assert region.region_id in [c.region_id for c in registry.children(parent.region_id)]
        # walking up always terminates at a country
        node, hops = region, 0
        while node.parent_id is not None:
            node = registry.resolve(node.parent_id)
            hops += 1
            assert hops <= 2
        assert node.level is Level.COUNTRY


def test_round_trip_records(registry):
    records = registry.to_records()
    rebuilt = RegionRegistry.from_records(records)
    assert {r.region_id for r in rebuilt.all_regions()} == {
        r.region_id for r in registry.all_regions()
    }
    assert rebuilt.resolve("US-NY").population == 19_450_000

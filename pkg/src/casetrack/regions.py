"""Hierarchical geographic registry.

Regions form a fixed three-level tree (country, division, subdivision)
keyed by dash-joined hierarchical codes, e.g. ``US`` > ``US-NY`` >
``US-NY-061``. Each non-leaf region may own at most one synthetic
"unassigned" child that buckets cases not yet attributed to a specific
child region.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from enum import Enum

from .errors import (
    DuplicateCode,
    LeafParent,
    LevelMismatch,
    UnknownParent,
    UnknownRegion,
)

UNASSIGNED_SUFFIX = "-UNASSIGNED"


class Level(Enum):
    COUNTRY = "COUNTRY"
    DIVISION = "DIVISION"
    SUBDIVISION = "SUBDIVISION"

    @property
    def child_level(self) -> "Level | None":
        order = [Level.COUNTRY, Level.DIVISION, Level.SUBDIVISION]
        idx = order.index(self)
        return order[idx + 1] if idx + 1 < len(order) else None


@dataclass(frozen=True)
class Region:
    """One node of the geographic tree. Immutable once registered."""

    region_id: str
    name_en: str
    level: Level
    name_local: str = ""
    parent_id: str | None = None
    population: int | None = None
    is_unassigned: bool = False

    def __post_init__(self) -> None:
        if not self.region_id:
            raise ValueError("region_id must be non-empty")
        if self.population is not None and self.population < 0:
            raise ValueError(f"population must be >= 0, got {self.population}")
        if self.level is not Level.COUNTRY and self.parent_id is None:
            raise ValueError(f"non-country region {self.region_id} needs a parent_id")
        if self.level is Level.COUNTRY and self.parent_id is not None:
            raise ValueError(f"country region {self.region_id} cannot have a parent")


class RegionRegistry:
    """Registry plus children index over registered regions.

    Read-mostly: lookups return immutable :class:`Region` values;
    registrations are serialized through one internal lock.
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._regions: dict[str, Region] = {}
        self._children: dict[str, list[str]] = {}

    # -- registration ------------------------------------------------------

    def register(self, descriptor: Region) -> Region:
        """Add a region, validating code uniqueness and parent level."""
        with self._lock:
            if descriptor.region_id in self._regions:
                raise DuplicateCode(descriptor.region_id)
            if descriptor.parent_id is not None:
                parent = self._regions.get(descriptor.parent_id)
                if parent is None:
                    raise UnknownParent(descriptor.parent_id)
                if parent.level.child_level is not descriptor.level:
                    raise LevelMismatch(
                        f"{descriptor.region_id} at {descriptor.level.value} cannot sit "
                        f"under {parent.region_id} at {parent.level.value}"
                    )
            self._regions[descriptor.region_id] = descriptor
            self._children.setdefault(descriptor.region_id, [])
            if descriptor.parent_id is not None:
                self._children.setdefault(descriptor.parent_id, []).append(
                    descriptor.region_id
                )
            return descriptor

    def ensure_unassigned(self, parent_id: str) -> Region:
        """Return the parent's single unassigned child, creating it once."""
        with self._lock:
            parent = self._regions.get(parent_id)
            if parent is None:
                raise UnknownParent(parent_id)
            if parent.level is Level.SUBDIVISION:
                raise LeafParent(parent_id)
            code = parent_id + UNASSIGNED_SUFFIX
            existing = self._regions.get(code)
            if existing is not None:
                return existing
            child_level = parent.level.child_level
            assert child_level is not None
            region = Region(
                region_id=code,
                name_en=f"Unassigned ({parent.name_en})",
                name_local="",
                level=child_level,
                parent_id=parent_id,
                is_unassigned=True,
            )
            return self.register(region)

    # -- lookups -------------------------------------------------------------

    def resolve(self, code: str) -> Region:
        with self._lock:
            region = self._regions.get(code)
        if region is None:
            raise UnknownRegion(code)
        return region

    def __contains__(self, code: str) -> bool:
        with self._lock:
            return code in self._regions

    def children(self, code: str) -> list[Region]:
        """Children in registration order. Raises if ``code`` is unknown."""
        with self._lock:
            if code not in self._regions:
                raise UnknownRegion(code)
            return [self._regions[c] for c in self._children.get(code, [])]

    def all_regions(self) -> list[Region]:
        with self._lock:
            return list(self._regions.values())

    def countries(self) -> list[Region]:
        with self._lock:
            return [r for r in self._regions.values() if r.level is Level.COUNTRY]

    def update_population(self, code: str, population: int) -> Region:
        """Replace a region's population (the one mutable attribute)."""
        if population < 0:
            raise ValueError("population must be >= 0")
        with self._lock:
            region = self.resolve(code)
            updated = replace(region, population=population)
            self._regions[code] = updated
            return updated

    # -- serialization ---------------------------------------------------------

    def to_records(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "region_id": r.region_id,
                    "name_en": r.name_en,
                    "name_local": r.name_local,
                    "level": r.level.value,
                    "parent_id": r.parent_id,
                    "population": r.population,
                    "is_unassigned": r.is_unassigned,
                }
                for r in self._regions.values()
            ]

    @classmethod
    def from_records(cls, records: list[dict]) -> "RegionRegistry":
        """Build a registry from config records (parents before children)."""
        registry = cls()
        for rec in records:
            registry.register(
                Region(
                    region_id=rec["region_id"],
                    name_en=rec.get("name_en", rec["region_id"]),
                    name_local=rec.get("name_local", ""),
                    level=Level(rec["level"]),
                    parent_id=rec.get("parent_id"),
                    population=rec.get("population"),
                    is_unassigned=bool(rec.get("is_unassigned", False)),
                )
            )
        return registry

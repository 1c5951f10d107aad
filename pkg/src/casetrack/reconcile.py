"""Cross-level consistency for federated reporting hierarchies.

Different administrative levels report on their own schedules, so a
parent's figure and the sum of its children routinely disagree. A parent
leading its children is normal (the difference becomes the unassigned
bucket); children leading the parent is tolerated within a staleness
window and logged to the discrepancy diary beyond it. Display totals
always come from the finest granularity available.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from enum import Enum

from .errors import CaseTrackError
from .gate import ChangeKind, ProposedChange, QualityGate
from .regions import Level, Region, RegionRegistry, UNASSIGNED_SUFFIX
from .series import Metric
from .store import SeriesStore

RECONCILER_SOURCE_ID = "reconciler"


class CheckResult(Enum):
    CONSISTENT = "Consistent"
    CHILD_LEAD = "ChildLead"
    DISCREPANCY = "Discrepancy"


class NoParentReport(CaseTrackError):
    """Parent has no own figure; children are authoritative, nothing to check."""


@dataclass(frozen=True)
class Discrepancy:
    parent_region: str
    metric: Metric
    day: date
    parent_value: int
    children_sum: int
    staleness_note: dict[str, str] = field(default_factory=dict)

    @property
    def delta(self) -> int:
        return self.parent_value - self.children_sum

    def __post_init__(self) -> None:
        if self.parent_value == self.children_sum:
            raise ValueError("zero-delta is consistent, not a discrepancy")


@dataclass(frozen=True)
class CrossLevelOutcome:
    result: CheckResult
    parent_value: int
    children_sum: int
    discrepancy: Discrepancy | None = None

    @property
    def delta(self) -> int:
        return self.children_sum - self.parent_value


class DiaryStatus(Enum):
    OPEN = "OPEN"
    RESOLVED = "RESOLVED"
    PERSISTENT = "PERSISTENT"


@dataclass
class DiaryEntry:
    entry_id: str
    discrepancy: Discrepancy
    first_seen: datetime
    last_seen: datetime
    status: DiaryStatus = DiaryStatus.OPEN
    notes: list[tuple[datetime, str]] = field(default_factory=list)

    @property
    def is_live(self) -> bool:
        return self.status in (DiaryStatus.OPEN, DiaryStatus.PERSISTENT)


@dataclass(frozen=True)
class ReconcilerConfig:
    staleness_window: timedelta = timedelta(hours=24)
    diary_horizon: timedelta = timedelta(days=7)


@dataclass(frozen=True)
class RollupResult:
    per_region: dict[str, int]
    per_level: dict[Level, int]


class Reconciler:
    """Scheduled sweep over parents with reporting children.

    Only one sweep runs at a time; writes go through the gate (unassigned
    buckets) and into the diary, never directly into committed series.
    """

    def __init__(
        self,
        regions: RegionRegistry,
        store: SeriesStore,
        gate: QualityGate,
        config: ReconcilerConfig | None = None,
    ) -> None:
        self.regions = regions
        self.store = store
        self.gate = gate
        self.config = config or ReconcilerConfig()
        self.diary: dict[str, DiaryEntry] = {}
        self._entry_seq = 0
        self._sweep_lock = threading.Lock()

    # -- single-parent checks ------------------------------------------------------

    def _reporting_children(self, parent_id: str, metric: Metric, day: date) -> list[Region]:
        return [
            child
            for child in self.regions.children(parent_id)
            if not child.is_unassigned and self.store.has_data(child.region_id, metric, day)
        ]

    def cross_level_check(
        self,
        parent_id: str,
        metric: Metric,
        day: date,
        staleness_window: timedelta | None = None,
    ) -> CrossLevelOutcome:
        """Compare a parent's own figure with the sum of its children.

        Parent >= children is consistent (difference goes to unassigned).
        Children above the parent is a child-lead when every reporting
        child refreshed within the window after the parent's own update,
        and a diary-worthy discrepancy otherwise.
        """
        window = staleness_window or self.config.staleness_window
        children = self._reporting_children(parent_id, metric, day)
        if not children:
            raise ValueError(f"{parent_id} has no reporting children for {metric.value}")
        parent_value = self.store.value_at(parent_id, metric, day)
        if parent_value is None:
            raise NoParentReport(parent_id)
        children_sum = sum(
            self.store.value_at(child.region_id, metric, day) or 0 for child in children
        )
        if parent_value >= children_sum:
            return CrossLevelOutcome(CheckResult.CONSISTENT, parent_value, children_sum)
        parent_stamp = self.store.effective_fetched_at(parent_id, metric, day)
        notes: dict[str, str] = {}
        fresh_within_window = True
        for child in children:
            child_stamp = self.store.effective_fetched_at(child.region_id, metric, day)
            notes[child.region_id] = child_stamp.isoformat() if child_stamp else "unknown"
            if parent_stamp is None or child_stamp is None:
                fresh_within_window = False
            elif not (parent_stamp <= child_stamp <= parent_stamp + window):
                fresh_within_window = False
        if fresh_within_window:
            return CrossLevelOutcome(CheckResult.CHILD_LEAD, parent_value, children_sum)
        discrepancy = Discrepancy(
            parent_region=parent_id,
            metric=metric,
            day=day,
            parent_value=parent_value,
            children_sum=children_sum,
            staleness_note=notes,
        )
        return CrossLevelOutcome(
            CheckResult.DISCREPANCY, parent_value, children_sum, discrepancy
        )

    def compute_unassigned(
        self, parent_id: str, metric: Metric, day: date, now: datetime | None = None
    ) -> int:
        """Write max(0, parent - sum(children)) to the unassigned bucket via the gate."""
        parent_value = self.store.value_at(parent_id, metric, day)
        if parent_value is None:
            raise NoParentReport(parent_id)
        children_sum = sum(
            self.store.value_at(child.region_id, metric, day) or 0
            for child in self.regions.children(parent_id)
            if not child.is_unassigned
        )
        unassigned_value = max(0, parent_value - children_sum)
        bucket = self.regions.ensure_unassigned(parent_id)
        already = self.store.value_at(bucket.region_id, metric, day)
        if already == unassigned_value:
            return unassigned_value
        if unassigned_value == 0 and not self.store.has_data(bucket.region_id, metric):
            return 0
        now = now or datetime.now(timezone.utc)
        proposal = ProposedChange(
            kind=ChangeKind.COMMIT_POINT,
            source_id=RECONCILER_SOURCE_ID,
            region_id=bucket.region_id,
            metric=metric,
            fetched_at=now,
            day=day,
            value=unassigned_value,
        )
        self.gate.process(proposal, now=now)
        return unassigned_value

    # -- diary -----------------------------------------------------------------------

    def diary_upsert(self, discrepancy: Discrepancy, now: datetime) -> DiaryEntry:
        """Bump the live entry for this (parent, metric) or open a new one."""
        for entry in self.diary.values():
            if entry.is_live and (
                entry.discrepancy.parent_region,
                entry.discrepancy.metric,
            ) == (discrepancy.parent_region, discrepancy.metric):
                entry.last_seen = now
                entry.discrepancy = discrepancy
                return entry
        self._entry_seq += 1
        entry = DiaryEntry(
            entry_id=f"D{self._entry_seq:06d}",
            discrepancy=discrepancy,
            first_seen=now,
            last_seen=now,
        )
        self.diary[entry.entry_id] = entry
        return entry

    def _latest_day(self, parent_id: str, metric: Metric, fallback: date) -> date:
        days = [fallback]
        latest = self.store.latest(parent_id, metric)
        if latest is not None:
            days.append(latest[0])
        for child in self.regions.children(parent_id):
            latest = self.store.latest(child.region_id, metric)
            if latest is not None:
                days.append(latest[0])
        return max(days)

    def periodic_revisit(self, now: datetime) -> list[DiaryEntry]:
        """Re-check every live entry against current data; escalate the old."""
        revisited = []
        for entry in list(self.diary.values()):
            if not entry.is_live:
                continue
            disc = entry.discrepancy
            check_day = self._latest_day(disc.parent_region, disc.metric, disc.day)
            try:
                outcome = self.cross_level_check(disc.parent_region, disc.metric, check_day)
                still_open = outcome.result is CheckResult.DISCREPANCY
            except (NoParentReport, ValueError):
                still_open = False
            if not still_open:
                entry.status = DiaryStatus.RESOLVED
                entry.notes.append((now, "resolved on revisit"))
            else:
                entry.last_seen = now
                if now - entry.first_seen > self.config.diary_horizon:
                    entry.status = DiaryStatus.PERSISTENT
            revisited.append(entry)
        return revisited

    def diary_entries(self, status: DiaryStatus | None = None) -> list[DiaryEntry]:
        entries = sorted(self.diary.values(), key=lambda e: e.entry_id)
        if status is not None:
            entries = [e for e in entries if e.status is status]
        return entries

    def export_diary(self) -> str:
        """One JSON record per line with the full discrepancy payload."""
        lines = []
        for entry in self.diary_entries():
            disc = entry.discrepancy
            lines.append(
                json.dumps(
                    {
                        "entry_id": entry.entry_id,
                        "status": entry.status.value,
                        "first_seen": entry.first_seen.isoformat(),
                        "last_seen": entry.last_seen.isoformat(),
                        "parent_region": disc.parent_region,
                        "metric": disc.metric.value,
                        "date": disc.day.isoformat(),
                        "parent_value": disc.parent_value,
                        "children_sum": disc.children_sum,
                        "delta": disc.delta,
                        "staleness_note": disc.staleness_note,
                        "notes": [[t.isoformat(), n] for t, n in entry.notes],
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    # -- sweep --------------------------------------------------------------------

    def sweep(self, metric: Metric, day: date, now: datetime | None = None) -> dict[str, CheckResult]:
        """Check every parent with reporting children, maintaining buckets + diary."""
        now = now or datetime.now(timezone.utc)
        results: dict[str, CheckResult] = {}
        with self._sweep_lock:
            for region in self.regions.all_regions():
                if region.level is Level.SUBDIVISION or region.is_unassigned:
                    continue
                if not self._reporting_children(region.region_id, metric, day):
                    continue
                if self.store.value_at(region.region_id, metric, day) is None:
                    continue  # children authoritative, nothing to reconcile
                outcome = self.cross_level_check(region.region_id, metric, day)
                results[region.region_id] = outcome.result
                self.compute_unassigned(region.region_id, metric, day, now=now)
                if outcome.discrepancy is not None:
                    self.diary_upsert(outcome.discrepancy, now)
            return results

    # -- rollup ----------------------------------------------------------------------

    def display_total(self, region_id: str, metric: Metric, day: date) -> int:
        """Finest-granularity figure for one region.

        When any descendant reports, the region's total is the children's
        display totals plus its unassigned bucket, floored by its own
        report; a region without reporting descendants stands on its own
        figure. Each displayed total is sourced from children or from the
        own series, never by adding both.
        """
        region = self.regions.resolve(region_id)
        own = self.store.value_at(region_id, metric, day) or 0
        if region.level is Level.SUBDIVISION:
            return own
        children = [
            c for c in self.regions.children(region_id) if not c.is_unassigned
        ]
        reporting = [
            c for c in children if self._subtree_has_data(c.region_id, metric, day)
        ]
        if not reporting:
            return own
        unassigned_id = region_id + UNASSIGNED_SUFFIX
        unassigned = (
            self.store.value_at(unassigned_id, metric, day) or 0
            if unassigned_id in self.regions
            else 0
        )
        children_total = sum(
            self.display_total(c.region_id, metric, day) for c in children
        )
        return max(own, children_total + unassigned)

    def _subtree_has_data(self, region_id: str, metric: Metric, day: date) -> bool:
        if self.store.has_data(region_id, metric, day):
            return True
        return any(
            self._subtree_has_data(child.region_id, metric, day)
            for child in self.regions.children(region_id)
            if not child.is_unassigned
        )

    def finest_granularity_rollup(
        self, country_id: str, metric: Metric, day: date
    ) -> RollupResult:
        """Display totals for every region under a country, and per-level sums."""
        country = self.regions.resolve(country_id)
        if country.level is not Level.COUNTRY:
            raise ValueError(f"{country_id} is not a country")
        per_region: dict[str, int] = {}
        per_level: dict[Level, int] = {level: 0 for level in Level}

        def visit(region: Region) -> None:
            total = self.display_total(region.region_id, metric, day)
            per_region[region.region_id] = total
            per_level[region.level] += total
            for child in self.regions.children(region.region_id):
                visit(child)

        visit(country)
        return RollupResult(per_region=per_region, per_level=per_level)

    # -- snapshotting ------------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "entry_seq": self._entry_seq,
            "entries": [
                {
                    "entry_id": e.entry_id,
                    "status": e.status.value,
                    "first_seen": e.first_seen.isoformat(),
                    "last_seen": e.last_seen.isoformat(),
                    "notes": [[t.isoformat(), n] for t, n in e.notes],
                    "discrepancy": {
                        "parent_region": e.discrepancy.parent_region,
                        "metric": e.discrepancy.metric.value,
                        "day": e.discrepancy.day.isoformat(),
                        "parent_value": e.discrepancy.parent_value,
                        "children_sum": e.discrepancy.children_sum,
                        "staleness_note": dict(e.discrepancy.staleness_note),
                    },
                }
                for e in self.diary.values()
            ],
        }

    def load_state(self, state: dict) -> None:
        self._entry_seq = state.get("entry_seq", 0)
        self.diary.clear()
        for raw in state.get("entries", []):
            disc = raw["discrepancy"]
            entry = DiaryEntry(
                entry_id=raw["entry_id"],
                discrepancy=Discrepancy(
                    parent_region=disc["parent_region"],
                    metric=Metric(disc["metric"]),
                    day=date.fromisoformat(disc["day"]),
                    parent_value=disc["parent_value"],
                    children_sum=disc["children_sum"],
                    staleness_note=disc.get("staleness_note", {}),
                ),
                first_seen=datetime.fromisoformat(raw["first_seen"]),
                last_seen=datetime.fromisoformat(raw["last_seen"]),
                status=DiaryStatus(raw["status"]),
                notes=[
                    (datetime.fromisoformat(t), n) for t, n in raw.get("notes", [])
                ],
            )
            self.diary[entry.entry_id] = entry

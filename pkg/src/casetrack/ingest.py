"""Ingest pipeline: fetch, diff against the store, route through the gate.

Reporting paradigms map onto proposal kinds: full-history feeds propose
whole-series replacements, snapshot feeds propose single-point commits,
per-case feeds land records in the case table (deduplicated) and propose
commits for the re-aggregated cumulative counts. Proposals identical to
what is already stored are dropped, which makes re-ingestion a no-op.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

import httpx

from .errors import AlreadyBackfilled, CaseTrackError, OutOfOrderArchive
from .gate import (
    ChangeKind,
    GateOutcome,
    ProposedChange,
    QualityGate,
    TAG_DECREASE,
    TAG_DECREASE_ALARM,
    TAG_HISTORICAL_EDIT,
    find_duplicate,
)
from .regions import RegionRegistry
from .series import Metric, tally_case_records
from .sources import FetchBatch, Paradigm, SourceDescriptor, parse_payload
from .store import SeriesStore

logger = logging.getLogger(__name__)

Fetcher = Callable[[SourceDescriptor], bytes]


def default_fetcher(descriptor: SourceDescriptor, timeout: float = 10.0) -> bytes:
    """Read the endpoint: HTTP GET for URLs, file read otherwise."""
    endpoint = descriptor.endpoint
    if endpoint.startswith(("http://", "https://")):
        response = httpx.get(endpoint, timeout=timeout)
        if response.status_code != 200:
            raise CaseTrackError(
                f"{descriptor.source_id}: HTTP {response.status_code} from {endpoint}"
            )
        return response.content
    return Path(endpoint).read_bytes()


@dataclass
class IngestReport:
    source_id: str
    batch_digest: str
    outcomes: list[GateOutcome] = field(default_factory=list)
    dropped_unchanged: int = 0
    duplicate_records: int = 0
    new_records: int = 0
    unmatched_keys: tuple[str, ...] = ()
    fetch_error: str | None = None


class IngestPipeline:
    def __init__(
        self,
        regions: RegionRegistry,
        store: SeriesStore,
        gate: QualityGate,
        sources: Iterable[SourceDescriptor] = (),
        fetcher: Fetcher | None = None,
    ) -> None:
        self.regions = regions
        self.store = store
        self.gate = gate
        self.sources: dict[str, SourceDescriptor] = {
            s.source_id: s for s in sources
        }
        self.fetcher = fetcher or default_fetcher
        self.last_polled: dict[str, datetime] = {}
        self.backfilled: set[str] = set()
        self._in_flight: set[str] = set()
        self._sched_lock = threading.Lock()

    # -- parsing ---------------------------------------------------------------

    def parse(
        self, raw: bytes, descriptor: SourceDescriptor, fetched_at: datetime
    ) -> FetchBatch:
        return parse_payload(raw, descriptor, fetched_at, regions=self.regions)

    # -- ingestion ----------------------------------------------------------------

    def ingest(self, batch: FetchBatch, descriptor: SourceDescriptor) -> IngestReport:
        """Turn a parsed batch into proposals and push them through the gate."""
        report = IngestReport(
            source_id=batch.source_id,
            batch_digest=batch.payload_digest,
            unmatched_keys=batch.unmatched_keys,
        )
        proposals = self.build_proposals(batch, descriptor, report)
        for proposal in proposals:
            outcome = self.gate.process(proposal, now=batch.fetched_at)
            report.outcomes.append(outcome)
        return report

    def build_proposals(
        self,
        batch: FetchBatch,
        descriptor: SourceDescriptor,
        report: IngestReport | None = None,
    ) -> list[ProposedChange]:
        report = report or IngestReport(batch.source_id, batch.payload_digest)
        if descriptor.paradigm is Paradigm.FULL_HISTORY:
            return self._full_history_proposals(batch, report)
        if descriptor.paradigm is Paradigm.SNAPSHOT:
            return self._snapshot_proposals(batch, report)
        return self._per_case_proposals(batch, report)

    def _full_history_proposals(
        self, batch: FetchBatch, report: IngestReport
    ) -> list[ProposedChange]:
        grouped: dict[tuple[str, Metric], dict[date, int]] = {}
        for obs in batch.observations:
            if obs.value is None:
                continue
            grouped.setdefault((obs.region_id, obs.metric), {})[obs.day] = obs.value
        proposals = []
        alarm_fraction = self.gate.config.full_history_decrease_alarm_fraction
        for (region_id, metric), by_day in sorted(
            grouped.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
        ):
            payload = sorted(by_day.items())
            stored = self.store.points(region_id, metric)
            if payload == stored:
                report.dropped_unchanged += 1
                continue
            tags = set()
            stored_map = dict(stored)
            if stored:
                last_stored_day = stored[-1][0]
                edited = {d: v for d, v in payload if d <= last_stored_day}
                if edited != stored_map:
                    tags.add(TAG_HISTORICAL_EDIT)
                for d, v in payload:
                    old = stored_map.get(d)
                    if old and old > v and Fraction(old - v, old) > alarm_fraction:
                        tags.add(TAG_DECREASE_ALARM)
                        break
            proposals.append(
                ProposedChange(
                    kind=ChangeKind.REPLACE_HISTORY,
                    source_id=batch.source_id,
                    region_id=region_id,
                    metric=metric,
                    fetched_at=batch.fetched_at,
                    points=tuple(payload),
                    tags=frozenset(tags),
                )
            )
        return proposals

    def _snapshot_proposals(
        self, batch: FetchBatch, report: IngestReport
    ) -> list[ProposedChange]:
        latest: dict[tuple[str, Metric, date], int] = {}
        for obs in batch.observations:
            if obs.value is not None:
                latest[(obs.region_id, obs.metric, obs.day)] = obs.value
        proposals = []
        for (region_id, metric, day), value in sorted(
            latest.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])
        ):
            stored = dict(self.store.points(region_id, metric))
            if stored.get(day) == value:
                report.dropped_unchanged += 1
                continue
            tags = set()
            prev = self.store.value_before(region_id, metric, day)
            if value < prev:
                tags.add(TAG_DECREASE)
            proposals.append(
                ProposedChange(
                    kind=ChangeKind.COMMIT_POINT,
                    source_id=batch.source_id,
                    region_id=region_id,
                    metric=metric,
                    fetched_at=batch.fetched_at,
                    day=day,
                    value=value,
                    tags=frozenset(tags),
                )
            )
        return proposals

    def _per_case_proposals(
        self, batch: FetchBatch, report: IngestReport
    ) -> list[ProposedChange]:
        fresh = []
        stored_ids = {r.record_id for r in self.store.case_records()}
        for obs in batch.observations:
            record = obs.case
            if record is None or record.record_id in stored_ids:
                continue
            existing = self.store.case_records(region_id=record.region_id)
            if find_duplicate(record, existing) is not None:
                report.duplicate_records += 1
                continue
            self.store.add_case_records([record])
            stored_ids.add(record.record_id)
            fresh.append(record)
        report.new_records = len(fresh)
        proposals = []
        for region_id, metric in sorted(
            {(r.region_id, r.metric) for r in fresh},
            key=lambda k: (k[0], k[1].value),
        ):
            records = self.store.case_records(region_id=region_id, metric=metric)
            cumulative = tally_case_records(records)[(region_id, metric)]
            stored = dict(self.store.points(region_id, metric))
            for day, value in cumulative:
                if stored.get(day) == value:
                    report.dropped_unchanged += 1
                    continue
                proposals.append(
                    ProposedChange(
                        kind=ChangeKind.COMMIT_POINT,
                        source_id=batch.source_id,
                        region_id=region_id,
                        metric=metric,
                        fetched_at=batch.fetched_at,
                        day=day,
                        value=value,
                    )
                )
        return proposals

    # -- polling ------------------------------------------------------------------

    def poll_due(self, now: datetime) -> list[SourceDescriptor]:
        """Sources whose interval has elapsed, most stale first.

        Never-polled sources are due immediately and lead the list in
        registration order; in-flight sources are never returned twice.
        """
        with self._sched_lock:
            due = []
            for source_id, descriptor in self.sources.items():
                if source_id in self._in_flight:
                    continue
                last = self.last_polled.get(source_id)
                if last is None or now - last >= descriptor.poll_interval:
                    due.append(descriptor)

            def staleness(desc: SourceDescriptor) -> tuple[int, float]:
                last = self.last_polled.get(desc.source_id)
                return (1, last.timestamp()) if last is not None else (0, 0.0)

            due.sort(key=staleness)
            return due

    def fetch_and_ingest(
        self, descriptor: SourceDescriptor, now: datetime | None = None
    ) -> IngestReport:
        """One fetch cycle for one source; failures are recorded, not raised."""
        now = now or datetime.now(timezone.utc)
        with self._sched_lock:
            self.last_polled[descriptor.source_id] = now
            self._in_flight.add(descriptor.source_id)
        try:
            try:
                raw = self.fetcher(descriptor)
            except Exception as exc:
                logger.warning("fetch failed for %s: %s", descriptor.source_id, exc)
                return IngestReport(
                    source_id=descriptor.source_id,
                    batch_digest="",
                    fetch_error=str(exc),
                )
            batch = self.parse(raw, descriptor, fetched_at=now)
            return self.ingest(batch, descriptor)
        finally:
            with self._sched_lock:
                self._in_flight.discard(descriptor.source_id)

    def run_due(
        self, now: datetime | None = None, max_workers: int = 4
    ) -> list[IngestReport]:
        """Fetch every due source, concurrently across sources.

        Per-source exclusion comes from the in-flight set; per-series
        serialization from the gate's key locks.
        """
        now = now or datetime.now(timezone.utc)
        due = self.poll_due(now)
        if len(due) <= 1 or max_workers <= 1:
            return [self.fetch_and_ingest(desc, now) for desc in due]
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda d: self.fetch_and_ingest(d, now), due))

    # -- backfill -------------------------------------------------------------------

    def backfill(
        self,
        descriptor: SourceDescriptor,
        archives: list[tuple[date, bytes]],
        now: datetime | None = None,
    ) -> list[IngestReport]:
        """Apply dated snapshot archives oldest-first through normal ingestion.

        Runs at most once per source; a completed run sets a marker that
        makes any later call fail without touching the store.
        """
        if descriptor.paradigm is not Paradigm.SNAPSHOT:
            raise ValueError(
                f"{descriptor.source_id}: backfill applies to snapshot sources only"
            )
        if descriptor.source_id in self.backfilled:
            raise AlreadyBackfilled(descriptor.source_id)
        for (d0, _), (d1, _) in zip(archives, archives[1:]):
            if d1 <= d0:
                raise OutOfOrderArchive(f"{d1} does not follow {d0}")
        now = now or datetime.now(timezone.utc)
        reports = []
        for archive_day, raw in archives:
            batch = self.parse(raw, descriptor, fetched_at=now)
            reports.append(self.ingest(batch, descriptor))
        self.backfilled.add(descriptor.source_id)
        return reports

    # -- hold expiry -----------------------------------------------------------------

    def source_agrees(self, ticket) -> bool:
        """Re-fetch a held ticket's source and check it still reports the value."""
        descriptor = self.sources.get(ticket.proposal.source_id)
        if descriptor is None:
            return False
        try:
            raw = self.fetcher(descriptor)
            batch = self.parse(raw, descriptor, fetched_at=datetime.now(timezone.utc))
        except Exception as exc:
            logger.warning("re-fetch failed for %s: %s", descriptor.source_id, exc)
            return False
        proposal = ticket.proposal
        if proposal.kind is ChangeKind.REPLACE_HISTORY:
            grouped: dict[date, int] = {}
            for obs in batch.observations:
                if obs.value is not None and (obs.region_id, obs.metric) == (
                    proposal.region_id, proposal.metric,
                ):
                    grouped[obs.day] = obs.value
            return sorted(grouped.items()) == sorted(proposal.points)
        for obs in batch.observations:
            if obs.value is None:
                continue
            if (obs.region_id, obs.metric, obs.day) == (
                proposal.region_id, proposal.metric, proposal.day,
            ):
                return obs.value == proposal.value
        return False

    def expire_holds(self, now: datetime | None = None):
        now = now or datetime.now(timezone.utc)
        return self.gate.expire_holds(now, source_agrees=self.source_agrees)

    # -- snapshotting ----------------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "last_polled": {k: v.isoformat() for k, v in self.last_polled.items()},
            "backfilled": sorted(self.backfilled),
        }

    def load_state(self, state: dict) -> None:
        self.last_polled = {
            k: datetime.fromisoformat(v) for k, v in state.get("last_polled", {}).items()
        }
        self.backfilled = set(state.get("backfilled", []))

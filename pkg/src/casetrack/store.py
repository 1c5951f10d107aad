"""Committed series store.

Holds one cumulative series per (region, metric) plus the per-case record
table. Every committed series is non-decreasing: writes that would break
that order are rejected here regardless of what upstream checks did.

One store-wide lock serializes writers; readers copy under the lock and
therefore see a consistent snapshot per call.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
from datetime import date, datetime
from typing import Iterable, Sequence

from .errors import MonotonicityViolation, NonMonotonicPayload, UnknownRegion
from .regions import RegionRegistry
from .series import (
    CaseRecord,
    Metric,
    Provenance,
    SeriesFlag,
    StatRow,
    date_range,
    fatality_rate,
    forward_fill,
    is_non_decreasing,
    per_million,
    tally_case_records,
)


def aggregate_case_records(
    records: Iterable[CaseRecord], regions: RegionRegistry | None = None
) -> dict[tuple[str, Metric], list[tuple[date, int]]]:
    """Cumulative per-(region, metric) counts from per-case rows.

    With a registry, records referencing unknown regions raise; without
    one, aggregation is a pure tally.
    """
    records = list(records)
    if regions is not None:
        for record in records:
            if record.region_id not in regions:
                raise UnknownRegion(record.region_id)
    return tally_case_records(records)


class SeriesStore:
    def __init__(self, regions: RegionRegistry) -> None:
        self._regions = regions
        self._lock = threading.RLock()
        # (region_id, metric) -> sorted list of (date, value)
        self._series: dict[tuple[str, Metric], list[tuple[date, int]]] = {}
        self._provenance: dict[tuple[str, Metric], dict[date, Provenance]] = {}
        self._case_records: dict[str, CaseRecord] = {}

    # -- writes ----------------------------------------------------------------

    def commit_point(
        self,
        region_id: str,
        metric: Metric,
        day: date,
        value: int,
        provenance: Provenance,
    ) -> list[tuple[date, int]]:
        """Store one gate-approved point; overwrite replaces value and provenance.

        The point must fit between its date neighbors, otherwise the
        commit is a gate-bypass bug and is rejected.
        """
        if value < 0:
            raise ValueError(f"value must be >= 0, got {value}")
        self._require_region(region_id)
        key = (region_id, metric)
        with self._lock:
            points = self._series.get(key, [])
            before = max((v for d, v in points if d < day), default=None)
            after = min((v for d, v in points if d > day), default=None)
            if before is not None and value < before:
                raise MonotonicityViolation(
                    f"{region_id}/{metric.value}@{day}: {value} < {before} on an earlier date"
                )
            if after is not None and value > after:
                raise MonotonicityViolation(
                    f"{region_id}/{metric.value}@{day}: {value} > {after} on a later date"
                )
            updated = [(d, v) for d, v in points if d != day]
            updated.append((day, value))
            updated.sort()
            self._series[key] = updated
            self._provenance.setdefault(key, {})[day] = provenance
            return list(updated)

    def replace_history(
        self,
        region_id: str,
        metric: Metric,
        full_points: Sequence[tuple[date, int]],
        provenance: Provenance,
    ) -> list[tuple[date, int]]:
        """Atomically swap the whole stored series for an official revision."""
        self._require_region(region_id)
        ordered = sorted(full_points)
        if not is_non_decreasing(ordered):
            raise NonMonotonicPayload(f"{region_id}/{metric.value}")
        key = (region_id, metric)
        with self._lock:
            self._series[key] = list(ordered)
            self._provenance[key] = {d: provenance for d, _ in ordered}
            return list(ordered)

    def replace_repaired(
        self,
        region_id: str,
        metric: Metric,
        repaired: Sequence[tuple[date, int]],
        provenance: Provenance,
    ) -> list[tuple[date, int]]:
        """Install a monotonic-repair result, re-stamping only changed points."""
        self._require_region(region_id)
        ordered = sorted(repaired)
        if not is_non_decreasing(ordered):
            raise NonMonotonicPayload(f"{region_id}/{metric.value}")
        key = (region_id, metric)
        with self._lock:
            old = dict(self._series.get(key, []))
            stamps = self._provenance.setdefault(key, {})
            for d, v in ordered:
                if old.get(d) != v:
                    stamps[d] = provenance
            for gone in set(old) - {d for d, _ in ordered}:
                stamps.pop(gone, None)
            self._series[key] = list(ordered)
            return list(ordered)

    def add_case_records(self, records: Iterable[CaseRecord]) -> list[CaseRecord]:
        """Append per-case rows to the record table (id-keyed, idempotent)."""
        added = []
        with self._lock:
            for record in records:
                self._require_region(record.region_id)
                if record.record_id not in self._case_records:
                    self._case_records[record.record_id] = record
                    added.append(record)
        return added

    # -- reads -----------------------------------------------------------------

    def points(self, region_id: str, metric: Metric) -> list[tuple[date, int]]:
        self._require_region(region_id)
        with self._lock:
            return list(self._series.get((region_id, metric), []))

    def has_data(self, region_id: str, metric: Metric, at_or_before: date | None = None) -> bool:
        with self._lock:
            points = self._series.get((region_id, metric), [])
            if at_or_before is None:
                return bool(points)
            return any(d <= at_or_before for d, _ in points)

    def value_at(self, region_id: str, metric: Metric, day: date) -> int | None:
        """Forward-filled value at ``day``; None before the first point."""
        with self._lock:
            points = self._series.get((region_id, metric), [])
            best = None
            for d, v in points:
                if d <= day:
                    best = v
                else:
                    break
            return best

    def value_before(self, region_id: str, metric: Metric, day: date) -> int:
        """Committed value for the previous day (forward-filled), 0 if none."""
        with self._lock:
            points = self._series.get((region_id, metric), [])
            best = 0
            for d, v in points:
                if d < day:
                    best = v
                else:
                    break
            return best

    def latest(self, region_id: str, metric: Metric) -> tuple[date, int] | None:
        with self._lock:
            points = self._series.get((region_id, metric), [])
            return points[-1] if points else None

    def point_provenance(self, region_id: str, metric: Metric, day: date) -> Provenance | None:
        with self._lock:
            return self._provenance.get((region_id, metric), {}).get(day)

    def effective_fetched_at(self, region_id: str, metric: Metric, day: date) -> datetime | None:
        """Fetch instant of the forward-filled point in effect at ``day``."""
        with self._lock:
            points = self._series.get((region_id, metric), [])
            effective = None
            for d, _ in points:
                if d <= day:
                    effective = d
                else:
                    break
            if effective is None:
                return None
            stamp = self._provenance.get((region_id, metric), {}).get(effective)
            return stamp.fetched_at if stamp else None

    def case_records(
        self, region_id: str | None = None, metric: Metric | None = None
    ) -> list[CaseRecord]:
        with self._lock:
            records = list(self._case_records.values())
        if region_id is not None:
            records = [r for r in records if r.region_id == region_id]
        if metric is not None:
            records = [r for r in records if r.metric == metric]
        return records

    # -- analytics ----------------------------------------------------------------

    def to_compact_table(
        self, region_ids: Sequence[str], metric: Metric, days: tuple[date, date]
    ) -> tuple[list[date], list[list[int]]]:
        """Matrix of forward-filled values, one row per region, one column per day."""
        for region_id in region_ids:
            self._require_region(region_id)
        columns = date_range(days[0], days[1])
        rows = [forward_fill(self.points(r, metric), columns) for r in region_ids]
        return columns, rows

    def derive_active(self, region_id: str, day: date) -> int | SeriesFlag:
        """confirmed - deceased - recovered at ``day``; flags negatives.

        Missing deceased/recovered series count as zero. All three lookups
        happen under one lock so the arithmetic sees one snapshot.
        """
        with self._lock:
            confirmed = self.value_at(region_id, Metric.CONFIRMED, day)
            if confirmed is None:
                raise ValueError(f"no confirmed data for {region_id} at {day}")
            deceased = self.value_at(region_id, Metric.DECEASED, day) or 0
            recovered = self.value_at(region_id, Metric.RECOVERED, day) or 0
        active = confirmed - deceased - recovered
        if active < 0:
            return SeriesFlag.DATA_INCONSISTENT
        return active

    def stat_rows(
        self,
        region_ids: Sequence[str],
        day: date | None = None,
        contacts: dict[str, str] | None = None,
    ) -> list[StatRow]:
        """Summary rows at ``day`` (default: each region's latest data)."""
        rows = []
        for region_id in region_ids:
            region = self._regions.resolve(region_id)
            confirmed = self._summary_value(region_id, Metric.CONFIRMED, day)
            deceased = self._summary_value(region_id, Metric.DECEASED, day)
            recovered_points = self.points(region_id, Metric.RECOVERED)
            recovered = (
                self._summary_value(region_id, Metric.RECOVERED, day)
                if recovered_points
                else None
            )
            population = region.population
            rows.append(
                StatRow(
                    region_id=region_id,
                    confirmed=confirmed,
                    deceased=deceased,
                    recovered=recovered,
                    confirmed_per_million=(
                        per_million(confirmed, population) if population else None
                    ),
                    deceased_per_million=(
                        per_million(deceased, population) if population else None
                    ),
                    fatality_rate=fatality_rate(confirmed, deceased),
                    health_dept_contact=(contacts or {}).get(region_id),
                )
            )
        return rows

    def _summary_value(self, region_id: str, metric: Metric, day: date | None) -> int:
        if day is not None:
            return self.value_at(region_id, metric, day) or 0
        latest = self.latest(region_id, metric)
        return latest[1] if latest else 0

    # -- exports ---------------------------------------------------------------

    def export_ct_csv(self, metric: Metric, region_ids: Sequence[str] | None = None) -> str:
        """Compact-table CSV: region rows, ISO-dated columns, forward-filled cells."""
        if region_ids is None:
            with self._lock:
                region_ids = sorted(
                    {rid for (rid, m), pts in self._series.items() if m == metric and pts}
                )
        all_dates: list[date] = []
        for region_id in region_ids:
            all_dates.extend(d for d, _ in self.points(region_id, metric))
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        if not all_dates:
            writer.writerow(["region_id"])
            return buffer.getvalue()
        columns = date_range(min(all_dates), max(all_dates))
        writer.writerow(["region_id"] + [d.isoformat() for d in columns])
        for region_id in region_ids:
            filled = forward_fill(self.points(region_id, metric), columns)
            writer.writerow([region_id] + [str(v) for v in filled])
        return buffer.getvalue()

    def export_et_csv(self) -> str:
        """Per-case CSV with a pipe-separated source_refs column."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [
                "record_id",
                "region_id",
                "report_date",
                "metric",
                "cluster_size",
                "summary",
                "demographics",
                "source_refs",
            ]
        )
        with self._lock:
            records = sorted(
                self._case_records.values(), key=lambda r: (r.report_date, r.record_id)
            )
        for r in records:
            demo = ";".join(f"{k}={v}" for k, v in sorted(r.demographics.items()))
            writer.writerow(
                [
                    r.record_id,
                    r.region_id,
                    r.report_date.isoformat(),
                    r.metric.value,
                    str(r.cluster_size),
                    r.summary,
                    demo,
                    "|".join(r.source_refs),
                ]
            )
        return buffer.getvalue()

    # -- integrity ------------------------------------------------------------

    def digest(self) -> str:
        """Deterministic hash over all committed data (ignores provenance stamps)."""
        with self._lock:
            payload = {
                "series": {
                    f"{rid}/{m.value}": [[d.isoformat(), v] for d, v in pts]
                    for (rid, m), pts in sorted(
                        self._series.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
                    )
                    if pts
                },
                "case_records": [
                    [
                        r.record_id,
                        r.region_id,
                        r.report_date.isoformat(),
                        r.metric.value,
                        r.cluster_size,
                        sorted(r.demographics.items()),
                        r.summary,
                        list(r.source_refs),
                    ]
                    for r in sorted(self._case_records.values(), key=lambda r: r.record_id)
                ],
            }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def assert_all_monotonic(self) -> None:
        with self._lock:
            for (rid, metric), points in self._series.items():
                if not is_non_decreasing(points):
                    raise MonotonicityViolation(f"{rid}/{metric.value}: {points}")

    def series_keys(self) -> list[tuple[str, Metric]]:
        with self._lock:
            return [k for k, pts in self._series.items() if pts]

    # -- snapshotting ------------------------------------------------------------

    def to_state(self) -> dict:
        with self._lock:
            return {
                "series": [
                    {
                        "region_id": rid,
                        "metric": m.value,
                        "points": [[d.isoformat(), v] for d, v in pts],
                        "provenance": {
                            d.isoformat(): [p.source_id, p.fetched_at.isoformat()]
                            for d, p in self._provenance.get((rid, m), {}).items()
                        },
                    }
                    for (rid, m), pts in self._series.items()
                ],
                "case_records": [
                    {
                        "record_id": r.record_id,
                        "region_id": r.region_id,
                        "report_date": r.report_date.isoformat(),
                        "metric": r.metric.value,
                        "cluster_size": r.cluster_size,
                        "demographics": dict(r.demographics),
                        "summary": r.summary,
                        "source_refs": list(r.source_refs),
                    }
                    for r in self._case_records.values()
                ],
            }

    def load_state(self, state: dict) -> None:
        with self._lock:
            self._series.clear()
            self._provenance.clear()
            self._case_records.clear()
            for entry in state.get("series", []):
                key = (entry["region_id"], Metric(entry["metric"]))
                self._series[key] = [
                    (date.fromisoformat(d), v) for d, v in entry["points"]
                ]
                self._provenance[key] = {
                    date.fromisoformat(d): Provenance(sid, datetime.fromisoformat(ts))
                    for d, (sid, ts) in entry.get("provenance", {}).items()
                }
            for rec in state.get("case_records", []):
                record = CaseRecord(
                    record_id=rec["record_id"],
                    region_id=rec["region_id"],
                    report_date=date.fromisoformat(rec["report_date"]),
                    metric=Metric(rec["metric"]),
                    cluster_size=rec["cluster_size"],
                    demographics=rec.get("demographics", {}),
                    summary=rec.get("summary", ""),
                    source_refs=tuple(rec.get("source_refs", ())),
                )
                self._case_records[record.record_id] = record

    def _require_region(self, region_id: str) -> None:
        if region_id not in self._regions:
            raise UnknownRegion(region_id)

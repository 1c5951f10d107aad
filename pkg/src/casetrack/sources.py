"""Source descriptors and payload parsing.

Each feed is described by a :class:`SourceDescriptor`: which reporting
paradigm it follows, how its columns map onto the domain, its polling
cadence, and its local timezone. Parsing turns raw CSV/JSON bytes into
normalized observations; dates are interpreted in the source's own
timezone and shifted back by its reporting delay.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from typing import Mapping
from zoneinfo import ZoneInfo

from .errors import EmptyPayload, MalformedPayload
from .regions import RegionRegistry
from .series import CaseRecord, Metric

METRIC_ROLES = {m.value: m for m in Metric}

ROLE_REGION = "region"
ROLE_DATE = "date"
ROLE_CLUSTER_SIZE = "cluster_size"
ROLE_METRIC = "metric"
ROLE_SUMMARY = "summary"
ROLE_SOURCE_REF = "source_ref"
ROLE_IGNORE = "ignore"
DEMO_PREFIX = "demo:"


class Paradigm(Enum):
    FULL_HISTORY = "FULL_HISTORY"
    SNAPSHOT = "SNAPSHOT"
    PER_CASE = "PER_CASE"


class PayloadFormat(Enum):
    CSV = "CSV"
    JSON = "JSON"


@dataclass(frozen=True)
class SourceDescriptor:
    """Configuration of one feed."""

    source_id: str
    scope_region: str
    paradigm: Paradigm
    format: PayloadFormat
    field_map: Mapping[str, str]
    endpoint: str
    poll_interval: timedelta = timedelta(hours=2)
    timezone: str = "UTC"
    reported_delay_days: int = 0
    region_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.poll_interval <= timedelta(0):
            raise ValueError("poll_interval must be positive")
        if self.reported_delay_days < 0:
            raise ValueError("reported_delay_days must be >= 0")
        roles = set(self.field_map.values())
        if ROLE_DATE not in roles:
            raise ValueError(f"{self.source_id}: field_map must map a date column")
        if ROLE_REGION not in roles:
            raise ValueError(f"{self.source_id}: field_map must map a region column")
        if self.paradigm is not Paradigm.PER_CASE and not (roles & set(METRIC_ROLES)):
            raise ValueError(f"{self.source_id}: field_map must map at least one metric")
        ZoneInfo(self.timezone)  # fail fast on unknown zones

    @property
    def zone(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    @classmethod
    def from_dict(cls, raw: dict) -> "SourceDescriptor":
        return cls(
            source_id=raw["source_id"],
            scope_region=raw["scope_region"],
            paradigm=Paradigm(raw["paradigm"]),
            format=PayloadFormat(raw["format"]),
            field_map=dict(raw["field_map"]),
            endpoint=raw["endpoint"],
            poll_interval=timedelta(minutes=float(raw.get("poll_interval_minutes", 120))),
            timezone=raw.get("timezone", "UTC"),
            reported_delay_days=int(raw.get("reported_delay_days", 0)),
            region_map=dict(raw.get("region_map", {})),
        )


@dataclass(frozen=True)
class Observation:
    """One normalized data point: either a count or a per-case record."""

    region_id: str
    metric: Metric
    day: date
    value: int | None = None
    case: CaseRecord | None = None

    def __post_init__(self) -> None:
        if (self.value is None) == (self.case is None):
            raise ValueError("observation must carry exactly one of value/case")
        if self.value is not None and self.value < 0:
            raise ValueError(f"value must be >= 0, got {self.value}")


@dataclass(frozen=True)
class FetchBatch:
    source_id: str
    fetched_at: datetime
    observations: tuple[Observation, ...]
    payload_digest: str
    unmatched_keys: tuple[str, ...] = ()

    @property
    def is_partial(self) -> bool:
        return bool(self.unmatched_keys)


def parse_payload(
    raw: bytes,
    descriptor: SourceDescriptor,
    fetched_at: datetime,
    regions: RegionRegistry | None = None,
) -> FetchBatch:
    """Map raw feed bytes into observations under the descriptor's field_map.

    Region keys that resolve neither through the descriptor's region_map
    nor the registry are collected on the batch (partial batch) and their
    rows skipped; the batch digest is a content hash of the raw payload.
    """
    digest = hashlib.sha256(raw).hexdigest()
    rows = _decode_rows(raw, descriptor)
    if not rows:
        raise EmptyPayload(descriptor.source_id)
    observations: list[Observation] = []
    unmatched: list[str] = []
    for ordinal, row in enumerate(rows):
        region_key = _cell(row, descriptor, ROLE_REGION, ordinal)
        region_id = descriptor.region_map.get(region_key, region_key)
        if regions is not None and region_id not in regions:
            if region_key not in unmatched:
                unmatched.append(region_key)
            continue
        day = _parse_day(_cell(row, descriptor, ROLE_DATE, ordinal), descriptor, ordinal)
        if descriptor.paradigm is Paradigm.PER_CASE:
            observations.append(
                _case_observation(row, descriptor, region_id, day, ordinal)
            )
        else:
            observations.extend(
                _value_observations(row, descriptor, region_id, day, ordinal)
            )
    return FetchBatch(
        source_id=descriptor.source_id,
        fetched_at=fetched_at,
        observations=tuple(observations),
        payload_digest=digest,
        unmatched_keys=tuple(unmatched),
    )


def _decode_rows(raw: bytes, descriptor: SourceDescriptor) -> list[dict]:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPayload(f"{descriptor.source_id}: not UTF-8") from exc
    if descriptor.format is PayloadFormat.CSV:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise EmptyPayload(descriptor.source_id)
        missing = set(descriptor.field_map) - set(reader.fieldnames)
        if missing:
            raise MalformedPayload(
                f"{descriptor.source_id}: missing columns {sorted(missing)}"
            )
        return list(reader)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedPayload(f"{descriptor.source_id}: bad JSON") from exc
    if isinstance(doc, dict):
        for key in ("data", "rows"):
            if isinstance(doc.get(key), list):
                doc = doc[key]
                break
    if not isinstance(doc, list) or not all(isinstance(r, dict) for r in doc):
        raise MalformedPayload(f"{descriptor.source_id}: expected a list of objects")
    return doc


def _cell(row: dict, descriptor: SourceDescriptor, role: str, ordinal: int) -> str:
    for column, mapped in descriptor.field_map.items():
        if mapped == role:
            value = row.get(column)
            if value is None or str(value).strip() == "":
                raise MalformedPayload(
                    f"{descriptor.source_id} row {ordinal}: empty {role} column {column!r}"
                )
            return str(value).strip()
    raise MalformedPayload(f"{descriptor.source_id}: no column mapped to {role}")


def _parse_day(cell: str, descriptor: SourceDescriptor, ordinal: int) -> date:
    """Date in the source's local zone, shifted back by its reporting delay."""
    try:
        day = date.fromisoformat(cell)
    except ValueError:
        try:
            stamp = datetime.fromisoformat(cell.replace("Z", "+00:00"))
        except ValueError as exc:
            raise MalformedPayload(
                f"{descriptor.source_id} row {ordinal}: bad date {cell!r}"
            ) from exc
        if stamp.tzinfo is not None:
            stamp = stamp.astimezone(descriptor.zone)
        day = stamp.date()
    return day - timedelta(days=descriptor.reported_delay_days)


def _parse_count(cell: str, descriptor: SourceDescriptor, ordinal: int) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            as_float = float(text)
        except ValueError as exc:
            raise MalformedPayload(
                f"{descriptor.source_id} row {ordinal}: bad count {cell!r}"
            ) from exc
        if not as_float.is_integer():
            raise MalformedPayload(
                f"{descriptor.source_id} row {ordinal}: non-integer count {cell!r}"
            )
        value = int(as_float)
    if value < 0:
        raise MalformedPayload(
            f"{descriptor.source_id} row {ordinal}: negative count {cell!r}"
        )
    return value


def _value_observations(
    row: dict, descriptor: SourceDescriptor, region_id: str, day: date, ordinal: int
) -> list[Observation]:
    out = []
    for column, role in descriptor.field_map.items():
        metric = METRIC_ROLES.get(role)
        if metric is None:
            continue
        cell = row.get(column)
        if cell is None or str(cell).strip() == "":
            continue  # source omits this metric for the row
        out.append(
            Observation(
                region_id=region_id,
                metric=metric,
                day=day,
                value=_parse_count(str(cell), descriptor, ordinal),
            )
        )
    return out


def _case_observation(
    row: dict, descriptor: SourceDescriptor, region_id: str, day: date, ordinal: int
) -> Observation:
    cluster = 1
    metric = Metric.CONFIRMED
    summary = ""
    refs: list[str] = []
    demographics: dict[str, str] = {}
    for column, role in descriptor.field_map.items():
        cell = row.get(column)
        text = "" if cell is None else str(cell).strip()
        if role == ROLE_CLUSTER_SIZE and text:
            cluster = _parse_count(text, descriptor, ordinal)
            if cluster < 1:
                raise MalformedPayload(
                    f"{descriptor.source_id} row {ordinal}: cluster_size < 1"
                )
        elif role == ROLE_METRIC and text:
            try:
                metric = Metric(text.lower())
            except ValueError as exc:
                raise MalformedPayload(
                    f"{descriptor.source_id} row {ordinal}: unknown metric {text!r}"
                ) from exc
        elif role == ROLE_SUMMARY:
            summary = text
        elif role == ROLE_SOURCE_REF and text:
            refs.extend(part.strip() for part in text.split("|") if part.strip())
        elif role.startswith(DEMO_PREFIX) and text:
            demographics[role[len(DEMO_PREFIX):]] = text
    if not refs:
        refs = [descriptor.endpoint]
    record_id = _record_id(
        descriptor.source_id, region_id, day, metric, cluster, demographics, refs, ordinal
    )
    record = CaseRecord(
        record_id=record_id,
        region_id=region_id,
        report_date=day,
        metric=metric,
        cluster_size=cluster,
        demographics=demographics,
        summary=summary,
        source_refs=tuple(refs),
    )
    return Observation(region_id=region_id, metric=metric, day=day, case=record)


def _record_id(
    source_id: str,
    region_id: str,
    day: date,
    metric: Metric,
    cluster: int,
    demographics: dict[str, str],
    refs: list[str],
    ordinal: int,
) -> str:
    blob = json.dumps(
        [source_id, region_id, day.isoformat(), metric.value, cluster,
         sorted(demographics.items()), sorted(refs), ordinal],
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]

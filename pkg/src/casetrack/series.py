"""Cumulative time-series types and pure curve analytics.

A series maps calendar dates to non-decreasing cumulative counts for one
(region, metric) pair. Everything here is pure: the committed store with
its invariants lives in :mod:`casetrack.store`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import EmptyDateRange, NotADecrease, ZeroPopulation


class Metric(Enum):
    CONFIRMED = "confirmed"
    DECEASED = "deceased"
    RECOVERED = "recovered"
    TESTED_POSITIVE = "tested_positive"
    TESTED_NEGATIVE = "tested_negative"
    HOSPITALIZED = "hospitalized"


class SeriesFlag(Enum):
    """Return variants for analytics that cannot yield a number."""

    DATA_INCONSISTENT = "DATA_INCONSISTENT"
    BELOW_THRESHOLD = "BELOW_THRESHOLD"


@dataclass(frozen=True)
class Provenance:
    """Where a committed point came from and when it was fetched."""

    source_id: str
    fetched_at: datetime


@dataclass(frozen=True)
class CaseRecord:
    """One case or small case-cluster row with its source references."""

    record_id: str
    region_id: str
    report_date: date
    metric: Metric
    cluster_size: int = 1
    demographics: Mapping[str, str] = field(default_factory=dict)
    summary: str = ""
    source_refs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.cluster_size < 1:
            raise ValueError(f"cluster_size must be >= 1, got {self.cluster_size}")
        if not self.source_refs:
            raise ValueError("source_refs must be non-empty")


@dataclass(frozen=True)
class StatRow:
    """Per-region summary row for tabular presentation."""

    region_id: str
    confirmed: int
    deceased: int
    recovered: int | None = None
    confirmed_per_million: Fraction | None = None
    deceased_per_million: Fraction | None = None
    fatality_rate: Fraction | None = None
    health_dept_contact: str | None = None


Points = Sequence[tuple[date, int]]


def is_non_decreasing(points: Points) -> bool:
    """True when dates strictly increase and values never drop."""
    for (d0, v0), (d1, v1) in zip(points, points[1:]):
        if d1 <= d0 or v1 < v0:
            return False
    return True


def monotonic_repair(points: Points, new_date: date, new_value: int) -> list[tuple[date, int]]:
    """Append a lower total by clamping the minimal trailing suffix.

    Walking backward from the most recent point, every stored value above
    ``new_value`` is clamped down to it; earlier points stay untouched and
    the new point is appended last. Equality is tolerated (nothing to
    clamp); a value above the last stored one means the caller misrouted.
    """
    if not points:
        return [(new_date, new_value)]
    last_date, last_value = points[-1]
    if new_value > last_value:
        raise NotADecrease(f"{new_value} > last stored value {last_value}")
    if new_date <= last_date:
        raise ValueError(f"new_date {new_date} not after last stored date {last_date}")
    repaired = [(d, min(v, new_value)) for d, v in points]
    repaired.append((new_date, new_value))
    return repaired


def clamped_insert(points: Points, new_date: date, new_value: int) -> list[tuple[date, int]]:
    """Place a point anywhere in a series, clamping earlier values above it.

    Generalizes :func:`monotonic_repair` to mid-series dates: points before
    ``new_date`` are clamped down to ``new_value`` where they exceed it,
    a point at ``new_date`` is replaced, and later points are untouched
    (they are always >= the clamped values, so the result stays sorted).
    """
    out: list[tuple[date, int]] = []
    inserted = False
    for d, v in points:
        if d < new_date:
            out.append((d, min(v, new_value)))
        elif d == new_date:
            out.append((new_date, new_value))
            inserted = True
        else:
            if not inserted:
                out.append((new_date, new_value))
                inserted = True
            out.append((d, v))
    if not inserted:
        out.append((new_date, new_value))
    return out


def tally_case_records(
    records: Iterable[CaseRecord],
) -> dict[tuple[str, Metric], list[tuple[date, int]]]:
    """Aggregate per-case rows into cumulative per-(region, metric) series.

    Daily count is the sum of cluster sizes sharing a report date; the
    cumulative series is the running sum over sorted dates. Demographics
    are discarded by design.
    """
    daily: dict[tuple[str, Metric], dict[date, int]] = {}
    for record in records:
        key = (record.region_id, record.metric)
        per_day = daily.setdefault(key, {})
        per_day[record.report_date] = per_day.get(record.report_date, 0) + record.cluster_size
    out: dict[tuple[str, Metric], list[tuple[date, int]]] = {}
    for key, per_day in daily.items():
        running = 0
        series: list[tuple[date, int]] = []
        for day in sorted(per_day):
            running += per_day[day]
            series.append((day, running))
        out[key] = series
    return out


def forward_fill(points: Points, days: Sequence[date]) -> list[int]:
    """Value at each requested day: latest stored point at or before it, else 0.

    ``days`` must be ascending (two-pointer sweep).
    """
    out: list[int] = []
    idx = 0
    current = 0
    for day in days:
        while idx < len(points) and points[idx][0] <= day:
            current = points[idx][1]
            idx += 1
        out.append(current if (idx > 0 and points[idx - 1][0] <= day) else 0)
    return out


def date_range(start: date, end: date) -> list[date]:
    """Inclusive daily range; raises when start is after end."""
    if start > end:
        raise EmptyDateRange(f"{start} > {end}")
    days = []
    day = start
    while day <= end:
        days.append(day)
        day = day.fromordinal(day.toordinal() + 1)
    return days


def align_at_threshold(points: Points, threshold: int) -> dict[int, int] | SeriesFlag:
    """Re-index a series to days relative to its first crossing of ``threshold``.

    Day 0 is the first date whose value reaches the threshold; later stored
    points map to their calendar-day offset from it. Returns the
    BELOW_THRESHOLD flag when the series never gets there.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    day_zero: date | None = None
    for d, v in points:
        if v >= threshold:
            day_zero = d
            break
    if day_zero is None:
        return SeriesFlag.BELOW_THRESHOLD
    return {
        (d - day_zero).days: v
        for d, v in points
        if d >= day_zero
    }


def daily_new(points: Points) -> list[tuple[date, int]]:
    """First differences between stored points; the first point is unchanged."""
    out: list[tuple[date, int]] = []
    prev: int | None = None
    for d, v in points:
        out.append((d, v if prev is None else v - prev))
        prev = v
    return out


def per_million(value: int, population: int) -> Fraction:
    """Exact rate per million inhabitants."""
    if population <= 0:
        raise ZeroPopulation(f"population must be > 0, got {population}")
    return Fraction(value * 1_000_000, population)


def fatality_rate(confirmed: int, deceased: int) -> Fraction | None:
    """Deceased over confirmed; absent when nothing is confirmed."""
    if confirmed <= 0:
        return None
    return Fraction(deceased, confirmed)

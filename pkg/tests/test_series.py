from __future__ import annotations

import random
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from casetrack.errors import (
    EmptyDateRange,
    MonotonicityViolation,
    NonMonotonicPayload,
    NotADecrease,
    UnknownRegion,
    ZeroPopulation,
)
from casetrack.series import (
    CaseRecord,
    Metric,
    Provenance,
    SeriesFlag,
    align_at_threshold,
    clamped_insert,
    daily_new,
    forward_fill,
    is_non_decreasing,
    monotonic_repair,
    per_million,
    tally_case_records,
)
from casetrack.store import aggregate_case_records

from oracles import backward_clamp, filled_value, first_crossing, per_day_tally

D = date(2020, 3, 1)
PROV = Provenance("test", datetime(2020, 3, 1, tzinfo=timezone.utc))


def days(*offsets):
    return [D + timedelta(days=o) for o in offsets]


def pts(*values, start=0):
    return [(D + timedelta(days=start + i), v) for i, v in enumerate(values)]


def record(region, day_offset, cluster, metric=Metric.CONFIRMED, rid=None, refs=("http://a",)):
    return CaseRecord(
        record_id=rid or f"r{region}-{day_offset}-{cluster}-{random.random()}",
        region_id=region,
        report_date=D + timedelta(days=day_offset),
        metric=metric,
        cluster_size=cluster,
        source_refs=tuple(refs),
    )


# -- commit_point ----------------------------------------------------------------


def test_commit_sequence(store):
    for i, v in enumerate([10, 12, 15]):
        store.commit_point("US-NY-061", Metric.CONFIRMED, D + timedelta(days=i), v, PROV)
    assert store.points("US-NY-061", Metric.CONFIRMED) == pts(10, 12, 15)


def test_commit_decrease_without_repair_rejected(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 15, PROV)
    with pytest.raises(MonotonicityViolation):
        store.commit_point(
            "US-NY-061", Metric.CONFIRMED, D + timedelta(days=1), 14, PROV
        )


def test_commit_idempotent(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 10, PROV)
    before = store.digest()
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 10, PROV)
    assert store.digest() == before


def test_commit_overwrite_replaces_value_and_provenance(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 10, PROV)
    newer = Provenance("test2", datetime(2020, 3, 2, tzinfo=timezone.utc))
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 11, newer)
    assert store.points("US-NY-061", Metric.CONFIRMED) == [(D, 11)]
    assert store.point_provenance("US-NY-061", Metric.CONFIRMED, D) == newer


def test_commit_unknown_region(store):
    with pytest.raises(UnknownRegion):
        store.commit_point("ZZ", Metric.CONFIRMED, D, 1, PROV)


# -- replace_history --------------------------------------------------------------


def test_replace_history_official_revision(store):
    for i, v in enumerate([10, 12, 15]):
        store.commit_point("IT-25", Metric.CONFIRMED, D + timedelta(days=i), v, PROV)
    store.replace_history("IT-25", Metric.CONFIRMED, pts(10, 11, 14), PROV)
    assert store.points("IT-25", Metric.CONFIRMED) == pts(10, 11, 14)


def test_replace_identical_is_noop(store):
    store.replace_history("IT-25", Metric.CONFIRMED, pts(10, 12), PROV)
    before = store.digest()
    store.replace_history("IT-25", Metric.CONFIRMED, pts(10, 12), PROV)
    assert store.digest() == before


def test_replace_non_monotonic_rejected(store):
    with pytest.raises(NonMonotonicPayload):
        store.replace_history("IT-25", Metric.CONFIRMED, pts(10, 12, 9), PROV)


# -- monotonic_repair --------------------------------------------------------------


def test_repair_clamps_minimal_suffix():
    repaired = monotonic_repair(pts(10, 12, 15), D + timedelta(days=3), 14)
    assert repaired == pts(10, 12, 14, 14)


def test_repair_deeper_clamp():
    repaired = monotonic_repair(pts(10, 12, 15), D + timedelta(days=3), 11)
    assert repaired == pts(10, 11, 11, 11)


def test_repair_equality_appends_without_error():
    repaired = monotonic_repair([(D, 10)], D + timedelta(days=1), 10)
    assert repaired == pts(10, 10)


def test_repair_increase_is_not_a_decrease():
    with pytest.raises(NotADecrease):
        monotonic_repair([(D, 10)], D + timedelta(days=1), 12)


@given(
    st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=30),
    st.integers(min_value=0, max_value=10_000),
)
def test_repair_matches_backward_clamp_oracle(raw, new_value):
    values = sorted(raw)
    new_value = min(new_value, values[-1])
    points = pts(*values)
    repaired = monotonic_repair(points, D + timedelta(days=len(values)), new_value)
    assert [v for _, v in repaired] == backward_clamp(values, new_value)
    assert is_non_decreasing(repaired)
    assert repaired[-1][1] == new_value


def test_clamped_insert_mid_series():
    points = pts(10, 12, 15)
    result = clamped_insert(points, D + timedelta(days=1), 9)
    assert result == [(D, 9), (D + timedelta(days=1), 9), (D + timedelta(days=2), 15)]
    assert is_non_decreasing(result)


# -- aggregation --------------------------------------------------------------------


def test_aggregate_two_records():
    records = [
        record("US-NY-061", 0, 2, rid="a"),
        record("US-NY-061", 1, 3, rid="b"),
    ]
    out = tally_case_records(records)
    assert out[("US-NY-061", Metric.CONFIRMED)] == pts(2, 5)


def test_aggregate_empty():
    assert tally_case_records([]) == {}


def test_aggregate_unknown_region_checked(registry):
    with pytest.raises(UnknownRegion):
        aggregate_case_records([record("ZZ", 0, 1, rid="x")], registry)


def test_aggregate_matches_naive_tally_oracle():
    rng = random.Random(7)
    records = [
        record(
            f"R{rng.randrange(5)}",
            rng.randrange(30),
            rng.randrange(1, 6),
            metric=rng.choice([Metric.CONFIRMED, Metric.DECEASED]),
            rid=f"rec{i}",
        )
        for i in range(1000)
    ]
    assert tally_case_records(records) == per_day_tally(records)


# -- compact table -----------------------------------------------------------------


def test_compact_table_forward_fills(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 2, PROV)
    store.commit_point("US-NY-061", Metric.CONFIRMED, D + timedelta(days=2), 5, PROV)
    columns, rows = store.to_compact_table(
        ["US-NY-061"], Metric.CONFIRMED, (D, D + timedelta(days=3))
    )
    assert rows == [[2, 2, 5, 5]]
    assert columns == days(0, 1, 2, 3)


def test_compact_table_empty_region_is_zero_row(store):
    _, rows = store.to_compact_table(["US-NY-059"], Metric.CONFIRMED, (D, D + timedelta(days=2)))
    assert rows == [[0, 0, 0]]


def test_compact_table_single_cell(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 7, PROV)
    _, rows = store.to_compact_table(["US-NY-061"], Metric.CONFIRMED, (D, D))
    assert rows == [[7]]


def test_compact_table_empty_range_rejected(store):
    with pytest.raises(EmptyDateRange):
        store.to_compact_table(["US-NY-061"], Metric.CONFIRMED, (D, D - timedelta(days=1)))


def test_forward_fill_matches_naive_scan():
    rng = random.Random(3)
    for _ in range(50):
        values = sorted(rng.randrange(100) for _ in range(rng.randrange(1, 8)))
        offsets = sorted(rng.sample(range(20), len(values)))
        points = [(D + timedelta(days=o), v) for o, v in zip(offsets, values)]
        window = [D + timedelta(days=i) for i in range(22)]
        assert forward_fill(points, window) == [filled_value(points, d) for d in window]


# -- burn-down arithmetic ---------------------------------------------------------


def test_derive_active(store):
    store.commit_point("IT-25", Metric.CONFIRMED, D, 100, PROV)
    store.commit_point("IT-25", Metric.DECEASED, D, 10, PROV)
    store.commit_point("IT-25", Metric.RECOVERED, D, 30, PROV)
    assert store.derive_active("IT-25", D) == 60


def test_derive_active_missing_series_count_as_zero(store):
    store.commit_point("IT-25", Metric.CONFIRMED, D, 100, PROV)
    assert store.derive_active("IT-25", D) == 100


def test_derive_active_negative_flags(store):
    store.commit_point("IT-25", Metric.CONFIRMED, D, 10, PROV)
    store.commit_point("IT-25", Metric.RECOVERED, D, 20, PROV)
    assert store.derive_active("IT-25", D) is SeriesFlag.DATA_INCONSISTENT


# -- threshold alignment -------------------------------------------------------------


def test_align_at_threshold_basic():
    aligned = align_at_threshold(pts(80, 120, 200), 100)
    assert aligned == {0: 120, 1: 200}


def test_align_threshold_one_starts_at_first_point():
    aligned = align_at_threshold(pts(5, 9), 1)
    assert aligned == {0: 5, 1: 9}


def test_align_below_threshold():
    assert align_at_threshold(pts(10, 99), 100) is SeriesFlag.BELOW_THRESHOLD


def test_align_day_zero_matches_linear_scan_oracle():
    rng = random.Random(11)
    for _ in range(200):
        values = sorted(rng.randrange(300) for _ in range(rng.randrange(1, 10)))
        points = pts(*values)
        threshold = rng.randrange(1, 310)
        crossing = first_crossing(points, threshold)
        aligned = align_at_threshold(points, threshold)
        if crossing is None:
            assert aligned is SeriesFlag.BELOW_THRESHOLD
        else:
            assert aligned[0] == dict(points)[crossing]
            assert min(aligned) == 0


# -- differencing and rates ------------------------------------------------------------


def test_daily_new():
    assert daily_new(pts(10, 12, 15)) == pts(10, 2, 3)


def test_daily_new_telescopes():
    rng = random.Random(5)
    values = sorted(rng.randrange(1000) for _ in range(20))
    points = pts(*values)
    assert sum(v for _, v in daily_new(points)) == values[-1]


def test_per_million():
    assert per_million(500, 2_000_000) == Fraction(250)


def test_per_million_zero_population():
    with pytest.raises(ZeroPopulation):
        per_million(1, 0)


def test_stat_rows(store, registry):
    store.commit_point("IT-25", Metric.CONFIRMED, D, 200, PROV)
    store.commit_point("IT-25", Metric.DECEASED, D, 10, PROV)
    row = store.stat_rows(["IT-25"])[0]
    assert row.fatality_rate == Fraction(1, 20)
    assert row.confirmed == 200
    assert row.recovered is None
    assert row.confirmed_per_million == Fraction(200 * 1_000_000, 10_000_000)


def test_stat_rows_zero_confirmed_has_no_fatality_rate(store):
    row = store.stat_rows(["IT-25"])[0]
    assert row.fatality_rate is None
    assert row.confirmed == 0


# -- exports -----------------------------------------------------------------------


def test_ct_export_format(store):
    store.commit_point("US-NY-061", Metric.CONFIRMED, D, 2, PROV)
    store.commit_point("US-NY-061", Metric.CONFIRMED, D + timedelta(days=2), 5, PROV)
    store.commit_point("US-NY-059", Metric.CONFIRMED, D + timedelta(days=1), 3, PROV)
    csv_text = store.export_ct_csv(Metric.CONFIRMED)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "region_id,2020-03-01,2020-03-02,2020-03-03"
    assert "US-NY-059,0,3,3" in lines
    assert "US-NY-061,2,2,5" in lines


def test_ct_export_empty_store_is_header_only(store):
    assert store.export_ct_csv(Metric.CONFIRMED) == "region_id\n"


def test_et_export_pipe_separated_refs(store):
    store.add_case_records(
        [record("US-NY-061", 0, 1, rid="r1", refs=("http://a", "http://b"))]
    )
    text = store.export_et_csv()
    assert "http://a|http://b" in text
    assert text.startswith("record_id,region_id,report_date,metric,")

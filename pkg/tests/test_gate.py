from __future__ import annotations

import random
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from casetrack.errors import AlreadyResolved, NotADecrease, UnknownTicket
from casetrack.gate import (
    ChangeKind,
    DecisionKind,
    DecreaseKind,
    GateAction,
    GateConfig,
    ProposedChange,
    Resolution,
    TicketState,
    classify_decrease,
    deployment_check,
    detect_jump,
    find_duplicate,
)
from casetrack.regions import Level
from casetrack.series import CaseRecord, Metric, Provenance

from oracles import guard_rule_ids, jump_fires

D = date(2020, 4, 15)
T0 = datetime(2020, 4, 15, 12, 0, tzinfo=timezone.utc)
PROV = Provenance("test", T0)


def proposal(value, day=D, region="US-NY-061", metric=Metric.CONFIRMED, source="s1"):
    return ProposedChange(
        kind=ChangeKind.COMMIT_POINT,
        source_id=source,
        region_id=region,
        metric=metric,
        fetched_at=T0,
        day=day,
        value=value,
    )


# -- deployment_check ---------------------------------------------------------------


def test_transit_state_concatenation_blocked():
    decision = deployment_check(102, 102103, Level.SUBDIVISION)
    assert decision.kind is DecisionKind.BLOCK
    assert decision.rules == (2, 3, 4)


def test_decrease_blocks_rule_one():
    decision = deployment_check(50, 49, Level.SUBDIVISION)
    assert decision.rules == (1,)


def test_floor_boundaries_allow():
    # prev exactly at a floor never trips the percentage rule for it
    assert deployment_check(10, 45, Level.SUBDIVISION).kind is DecisionKind.ALLOW
    assert deployment_check(1000, 1501, Level.SUBDIVISION).kind is DecisionKind.ALLOW


def test_just_above_floor_blocks():
    decision = deployment_check(1001, 1503, Level.SUBDIVISION)
    assert decision.rules == (5,)


def test_absolute_cap_only_for_subdivisions():
    blocked = deployment_check(0, 4001, Level.SUBDIVISION)
    assert blocked.rules == (2,)
    assert deployment_check(0, 4001, Level.DIVISION).kind is DecisionKind.ALLOW
    assert deployment_check(0, 4001, Level.COUNTRY).kind is DecisionKind.ALLOW


def test_exact_ratio_boundary_never_trips_its_own_rule():
    # an increase of exactly 300% / 200% / 50% stays below the strict threshold
    assert deployment_check(100, 400, Level.DIVISION).rules == (4,)  # not rule 3
    assert deployment_check(100, 300, Level.DIVISION).kind is DecisionKind.ALLOW
    assert deployment_check(2000, 3000, Level.DIVISION).kind is DecisionKind.ALLOW


def test_first_report_prev_zero_only_rule_two_possible():
    assert deployment_check(0, 3999, Level.SUBDIVISION).kind is DecisionKind.ALLOW
    assert deployment_check(0, 4001, Level.SUBDIVISION).rules == (2,)


@given(
    st.integers(min_value=0, max_value=20_000),
    st.integers(min_value=0, max_value=20_000),
    st.sampled_from(list(Level)),
)
def test_deployment_check_matches_oracle(prev, new, level):
    decision = deployment_check(prev, new, level)
    expected = guard_rule_ids(prev, new, level is Level.SUBDIVISION)
    assert list(decision.rules) == expected
    assert (decision.kind is DecisionKind.BLOCK) == bool(expected)


# -- detect_jump -------------------------------------------------------------------


def test_jump_up():
    assert detect_jump(150, 500)


def test_jump_exact_ratio_is_not_a_jump():
    assert not detect_jump(150, 450)


def test_jump_floor_not_met():
    assert not detect_jump(80, 400)
    assert not detect_jump(100, 10_000)


def test_jump_down():
    assert detect_jump(500, 140)
    assert not detect_jump(500, 167)  # 500 < 3 * 167


@given(st.integers(min_value=0, max_value=10**7), st.integers(min_value=0, max_value=10**7))
def test_jump_matches_oracle(prev, new):
    assert detect_jump(prev, new) == jump_fires(prev, new)


# -- classify_decrease ---------------------------------------------------------------


def test_large_decrease_is_jump_error():
    assert classify_decrease(500, 140) is DecreaseKind.JUMP_ERROR


def test_small_decrease_is_history_correction():
    assert classify_decrease(120, 110) is DecreaseKind.HISTORY_CORRECTION


def test_decrease_below_floor_never_a_jump():
    assert classify_decrease(50, 40) is DecreaseKind.HISTORY_CORRECTION


def test_classify_requires_a_decrease():
    with pytest.raises(NotADecrease):
        classify_decrease(100, 100)


# -- gate pipeline -------------------------------------------------------------------


def commit_day(gate, value, offset=0, **kwargs):
    return gate.process(proposal(value, day=D + timedelta(days=offset), **kwargs), now=T0)


def test_allow_commits(gate, store):
    outcome = commit_day(gate, 10)
    assert outcome.action is GateAction.COMMITTED
    assert store.points("US-NY-061", Metric.CONFIRMED) == [(D, 10)]


def test_block_opens_hold_and_commits_nothing(gate, store):
    commit_day(gate, 102)
    digest_before = store.digest()
    outcome = commit_day(gate, 102103, offset=1)
    assert outcome.action is GateAction.HELD
    assert outcome.decision.rules == (2, 3, 4)
    assert store.digest() == digest_before
    assert len(gate.held_tickets()) == 1


def test_history_correction_repairs(gate, store):
    commit_day(gate, 10)
    commit_day(gate, 12, offset=1)
    commit_day(gate, 15, offset=2)
    outcome = commit_day(gate, 14, offset=3)
    assert outcome.action is GateAction.REPAIRED
    values = [v for _, v in store.points("US-NY-061", Metric.CONFIRMED)]
    assert values == [10, 12, 14, 14]


def test_decrease_jump_is_held_not_repaired(gate, store):
    commit_day(gate, 500)
    outcome = commit_day(gate, 140, offset=1)
    assert outcome.action is GateAction.HELD
    assert [v for _, v in store.points("US-NY-061", Metric.CONFIRMED)] == [500]


def test_hold_window_is_configured_midpoint(gate):
    outcome = commit_day(gate, 102)
    assert outcome.action is GateAction.COMMITTED
    held = commit_day(gate, 102103, offset=1)
    ticket = held.ticket
    assert ticket.expires_at - ticket.created_at == timedelta(hours=4)
    config = GateConfig()
    assert config.hold_window_min <= ticket.expires_at - ticket.created_at
    assert ticket.expires_at - ticket.created_at <= config.hold_window_max


def test_approve_commits_despite_rules(gate, store):
    commit_day(gate, 102)
    held = commit_day(gate, 102103, offset=1)
    gate.resolve_hold(held.ticket.ticket_id, Resolution.APPROVE, "op1", now=T0)
    assert store.latest("US-NY-061", Metric.CONFIRMED) == (D + timedelta(days=1), 102103)
    assert gate.ticket(held.ticket.ticket_id).state is TicketState.APPROVED


def test_reject_discards(gate, store):
    commit_day(gate, 102)
    held = commit_day(gate, 102103, offset=1)
    gate.resolve_hold(held.ticket.ticket_id, Resolution.REJECT, "op1", now=T0)
    assert store.latest("US-NY-061", Metric.CONFIRMED) == (D, 102)


def test_resolve_twice_fails(gate):
    commit_day(gate, 102)
    held = commit_day(gate, 102103, offset=1)
    gate.resolve_hold(held.ticket.ticket_id, Resolution.REJECT, "op1", now=T0)
    with pytest.raises(AlreadyResolved):
        gate.resolve_hold(held.ticket.ticket_id, Resolution.APPROVE, "op2", now=T0)


def test_resolve_unknown_ticket(gate):
    with pytest.raises(UnknownTicket):
        gate.resolve_hold("T999999", Resolution.APPROVE, "op1", now=T0)


def test_expiry_with_agreeing_source_commits(gate, store):
    commit_day(gate, 200)
    held = commit_day(gate, 900, offset=1)  # 350% increase
    assert held.action is GateAction.HELD
    later = T0 + timedelta(hours=5)
    expired = gate.expire_holds(later, source_agrees=lambda t: True)
    assert [t.state for t in expired] == [TicketState.EXPIRED_RETRIED]
    assert store.latest("US-NY-061", Metric.CONFIRMED) == (D + timedelta(days=1), 900)


def test_expiry_with_disagreeing_source_discards(gate, store):
    commit_day(gate, 200)
    commit_day(gate, 900, offset=1)
    later = T0 + timedelta(hours=5)
    expired = gate.expire_holds(later, source_agrees=lambda t: False)
    assert [t.state for t in expired] == [TicketState.REJECTED]
    assert store.latest("US-NY-061", Metric.CONFIRMED) == (D, 200)


def test_not_yet_expired_tickets_stay_held(gate):
    commit_day(gate, 200)
    commit_day(gate, 900, offset=1)
    assert gate.expire_holds(T0 + timedelta(hours=1), source_agrees=lambda t: True) == []
    assert len(gate.held_tickets()) == 1


def test_held_proposal_not_duplicated_on_reingest(gate):
    commit_day(gate, 102)
    commit_day(gate, 102103, offset=1)
    journal_len = len(gate.journal.entries)
    second = commit_day(gate, 102103, offset=1)
    assert second.action is GateAction.SKIPPED_DUPLICATE
    assert len(gate.held_tickets()) == 1
    assert len(gate.journal.entries) == journal_len


def test_replace_history_decrease_alarm_holds(gate, store):
    base = ProposedChange(
        kind=ChangeKind.REPLACE_HISTORY,
        source_id="s1",
        region_id="IT-25",
        metric=Metric.CONFIRMED,
        fetched_at=T0,
        points=((D, 100), (D + timedelta(days=1), 150)),
    )
    assert gate.process(base, now=T0).action is GateAction.COMMITTED
    revised = ProposedChange(
        kind=ChangeKind.REPLACE_HISTORY,
        source_id="s1",
        region_id="IT-25",
        metric=Metric.CONFIRMED,
        fetched_at=T0,
        points=((D, 80), (D + timedelta(days=1), 150)),
        tags=frozenset({"decrease-alarm"}),
    )
    outcome = gate.process(revised, now=T0)
    assert outcome.action is GateAction.HELD
    assert store.points("IT-25", Metric.CONFIRMED)[0] == (D, 100)


def test_non_monotonic_replace_blocked(gate, store):
    bad = ProposedChange(
        kind=ChangeKind.REPLACE_HISTORY,
        source_id="s1",
        region_id="IT-25",
        metric=Metric.CONFIRMED,
        fetched_at=T0,
        points=((D, 100), (D + timedelta(days=1), 90)),
    )
    outcome = gate.process(bad, now=T0)
    assert outcome.action is GateAction.BLOCKED
    assert store.points("IT-25", Metric.CONFIRMED) == []


# -- duplicate case records -----------------------------------------------------------


def rec(rid, region="US-WA-033", day=D, cluster=1, refs=("http://news/1",), demo=None):
    return CaseRecord(
        record_id=rid,
        region_id=region,
        report_date=day,
        metric=Metric.CONFIRMED,
        cluster_size=cluster,
        demographics=demo or {},
        source_refs=tuple(refs),
    )


def test_identical_record_is_duplicate():
    existing = [rec("a")]
    assert find_duplicate(rec("b"), existing) is existing[0]


def test_disjoint_refs_and_demographics_unique():
    existing = [rec("a", refs=("http://news/1",), demo={"age": "40"})]
    candidate = rec("b", refs=("http://news/2",), demo={"age": "60"})
    assert find_duplicate(candidate, existing) is None


def test_same_ref_different_cluster_unique():
    existing = [rec("a", cluster=1)]
    candidate = rec("b", cluster=3)
    assert find_duplicate(candidate, existing) is None


def test_never_compares_across_subdivisions():
    existing = [rec("a", region="US-NY-061")]
    candidate = rec("b", region="US-WA-033")
    assert find_duplicate(candidate, existing) is None


def test_identical_nonempty_demographics_is_duplicate():
    existing = [rec("a", refs=("http://news/1",), demo={"age": "40", "sex": "f"})]
    candidate = rec("b", refs=("http://news/9",), demo={"age": "40", "sex": "f"})
    assert find_duplicate(candidate, existing) is existing[0]


# -- config -----------------------------------------------------------------------


def test_gate_config_validation():
    with pytest.raises(ValueError):
        GateConfig(hold_window_min=timedelta(hours=7))
    with pytest.raises(ValueError):
        GateConfig(abs_daily_cap=0)


def test_gate_config_from_dict():
    config = GateConfig.from_dict(
        {"abs_daily_cap": 5000, "pct50": "0.5", "hold_window_min": 1, "hold_window_max": 3}
    )
    assert config.abs_daily_cap == 5000
    assert config.pct50 == Fraction(1, 2)
    assert config.hold_window == timedelta(hours=2)


def test_rules_never_mix_decrease_with_increase_rules():
    rng = random.Random(13)
    for _ in range(2000):
        prev = rng.randrange(0, 5000)
        new = rng.randrange(0, 20_000)
        rules = deployment_check(prev, new, Level.SUBDIVISION).rules
        if 1 in rules:
            assert rules == (1,)

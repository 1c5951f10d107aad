"""Quality gate: pre-deployment guard rules, jump handling, hold tickets.

Every proposed change to a committed series passes through here. Implausible
single-day changes are blocked by five rules; blocked increases become hold
tickets an operator can approve or reject, decreases are classified as
history corrections (repaired in place) or errors (held). Per-case records
are deduplicated within their subdivision.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable

from .errors import AlreadyResolved, MonotonicityViolation, NotADecrease, UnknownTicket
from .journal import Journal
from .regions import Level, RegionRegistry
from .series import CaseRecord, Metric, Provenance, clamped_insert
from .store import SeriesStore

RULE_DECREASE = 1
RULE_ABS_CAP = 2
RULE_PCT_300 = 3
RULE_PCT_200 = 4
RULE_PCT_50 = 5

TAG_HISTORICAL_EDIT = "historical-edit"
TAG_DECREASE = "decrease"
TAG_DECREASE_ALARM = "decrease-alarm"
TAG_JUMP = "jump"
TAG_NON_MONOTONIC = "non-monotonic-payload"
TAG_CONFLICT = "monotonic-conflict"


@dataclass(frozen=True)
class GateConfig:
    """Thresholds for the guard rules and hold windows.

    Percentage rules use strict comparisons on exact rationals: an increase
    fires only when strictly above the ratio, and only when the previous
    day's value is strictly above the rule's floor.
    """

    jump_ratio: Fraction = Fraction(3)
    jump_floor: int = 100
    hold_window_min: timedelta = timedelta(hours=2)
    hold_window_max: timedelta = timedelta(hours=6)
    abs_daily_cap: int = 4000
    pct300: Fraction = Fraction(3)
    pct300_floor: int = 10
    pct200: Fraction = Fraction(2)
    pct200_floor: int = 50
    pct50: Fraction = Fraction(1, 2)
    pct50_floor: int = 1000
    full_history_decrease_alarm_fraction: Fraction = Fraction(1, 10)

    def __post_init__(self) -> None:
        for name in ("jump_ratio", "abs_daily_cap", "pct300", "pct200", "pct50"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hold_window_min > self.hold_window_max:
            raise ValueError("hold_window_min must be <= hold_window_max")

    @property
    def hold_window(self) -> timedelta:
        return (self.hold_window_min + self.hold_window_max) / 2

    @classmethod
    def from_dict(cls, raw: dict) -> "GateConfig":
        kwargs: dict = {}
        for key in ("jump_floor", "abs_daily_cap", "pct300_floor", "pct200_floor", "pct50_floor"):
            if key in raw:
                kwargs[key] = int(raw[key])
        for key in ("jump_ratio", "pct300", "pct200", "pct50",
                    "full_history_decrease_alarm_fraction"):
            if key in raw:
                kwargs[key] = Fraction(str(raw[key]))
        for key in ("hold_window_min", "hold_window_max"):
            if key in raw:
                kwargs[key] = timedelta(hours=float(raw[key]))
        return cls(**kwargs)


class DecisionKind(Enum):
    ALLOW = "ALLOW"
    BLOCK = "BLOCK"
    HOLD = "HOLD"


@dataclass(frozen=True)
class GateDecision:
    kind: DecisionKind
    rules: tuple[int, ...] = ()
    ticket_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind is DecisionKind.BLOCK and not self.rules:
            raise ValueError("BLOCK decisions must carry at least one rule id")


def deployment_check(
    prev_value: int,
    new_value: int,
    region_level: Level,
    config: GateConfig | None = None,
) -> GateDecision:
    """Evaluate the five pre-deployment guard rules against a day transition.

    ``prev_value`` is the committed value for the previous day (0 for a
    region's first report). Returns BLOCK with every matching rule id, in
    rule order; the absolute daily cap applies to subdivision-level regions
    only.
    """
    cfg = config or GateConfig()
    increase = new_value - prev_value
    rules = []
    if new_value < prev_value:
        rules.append(RULE_DECREASE)
    if region_level is Level.SUBDIVISION and increase > cfg.abs_daily_cap:
        rules.append(RULE_ABS_CAP)
    for rule_id, ratio, floor in (
        (RULE_PCT_300, cfg.pct300, cfg.pct300_floor),
        (RULE_PCT_200, cfg.pct200, cfg.pct200_floor),
        (RULE_PCT_50, cfg.pct50, cfg.pct50_floor),
    ):
        # exact rational comparison, cross-multiplied to stay in integers
        if prev_value > floor and increase * ratio.denominator > ratio.numerator * prev_value:
            rules.append(rule_id)
    if rules:
        return GateDecision(DecisionKind.BLOCK, tuple(rules))
    return GateDecision(DecisionKind.ALLOW)


def detect_jump(prev_value: int, new_value: int, config: GateConfig | None = None) -> bool:
    """True when the value changes by strictly more than the configured ratio
    in either direction, provided the initial value is above the floor."""
    cfg = config or GateConfig()
    if prev_value <= cfg.jump_floor:
        return False
    num, den = cfg.jump_ratio.numerator, cfg.jump_ratio.denominator
    return new_value * den > num * prev_value or prev_value * den > num * new_value


class DecreaseKind(Enum):
    HISTORY_CORRECTION = "HISTORY_CORRECTION"
    JUMP_ERROR = "JUMP_ERROR"


def classify_decrease(
    last_value: int, new_value: int, config: GateConfig | None = None
) -> DecreaseKind:
    """Route a decrease: jump-sized drops are errors, the rest are corrections."""
    if new_value >= last_value:
        raise NotADecrease(f"{new_value} >= {last_value}")
    if detect_jump(last_value, new_value, config):
        return DecreaseKind.JUMP_ERROR
    return DecreaseKind.HISTORY_CORRECTION


# -- proposals ----------------------------------------------------------------


class ChangeKind(Enum):
    COMMIT_POINT = "COMMIT_POINT"
    REPLACE_HISTORY = "REPLACE_HISTORY"


@dataclass(frozen=True)
class ProposedChange:
    """One gate-bound change produced by an ingest adapter."""

    kind: ChangeKind
    source_id: str
    region_id: str
    metric: Metric
    fetched_at: datetime
    day: date | None = None
    value: int | None = None
    points: tuple[tuple[date, int], ...] = ()
    tags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.kind is ChangeKind.COMMIT_POINT and (self.day is None or self.value is None):
            raise ValueError("commit proposals need a day and a value")
        if self.kind is ChangeKind.REPLACE_HISTORY and not self.points:
            raise ValueError("replace proposals need points")

    def digest(self) -> str:
        """Content hash identifying the proposed data, not the fetch instant."""
        payload = {
            "kind": self.kind.value,
            "source_id": self.source_id,
            "region_id": self.region_id,
            "metric": self.metric.value,
            "day": self.day.isoformat() if self.day else None,
            "value": self.value,
            "points": [[d.isoformat(), v] for d, v in self.points],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def provenance(self) -> Provenance:
        return Provenance(source_id=self.source_id, fetched_at=self.fetched_at)


# -- hold tickets ---------------------------------------------------------------


class TicketState(Enum):
    HELD = "HELD"
    APPROVED = "APPROVED"
    REJECTED = "REJECTED"
    EXPIRED_RETRIED = "EXPIRED_RETRIED"


class Resolution(Enum):
    APPROVE = "APPROVE"
    REJECT = "REJECT"


@dataclass
class HoldTicket:
    ticket_id: str
    region_id: str
    metric: Metric
    proposal: ProposedChange
    triggered_rules: tuple[int, ...]
    created_at: datetime
    expires_at: datetime
    state: TicketState = TicketState.HELD
    resolved_by: str | None = None
    resolved_at: datetime | None = None
    note: str = ""


class GateAction(Enum):
    COMMITTED = "COMMITTED"
    REPAIRED = "REPAIRED"
    HELD = "HELD"
    BLOCKED = "BLOCKED"
    SKIPPED_DUPLICATE = "SKIPPED_DUPLICATE"


@dataclass(frozen=True)
class GateOutcome:
    action: GateAction
    proposal: ProposedChange
    decision: GateDecision | None = None
    ticket: HoldTicket | None = None


def find_duplicate(
    candidate: CaseRecord, existing: Iterable[CaseRecord]
) -> CaseRecord | None:
    """Duplicate check scoped to the candidate's own subdivision.

    A record is a duplicate when an existing same-region record matches on
    (report_date, metric, cluster_size) and either shares a source link or
    carries an identical non-empty demographics map.
    """
    cand_refs = set(candidate.source_refs)
    cand_demo = dict(candidate.demographics)
    for record in existing:
        if record.region_id != candidate.region_id:
            continue
        if (record.report_date, record.metric, record.cluster_size) != (
            candidate.report_date,
            candidate.metric,
            candidate.cluster_size,
        ):
            continue
        if cand_refs & set(record.source_refs):
            return record
        if cand_demo and dict(record.demographics) == cand_demo:
            return record
    return None


class QualityGate:
    """Serializes evaluation + commit per (region, metric) and owns tickets.

    Proposals that end up held or blocked are remembered by content digest,
    so re-ingesting the same payload neither re-opens tickets nor grows the
    journal.
    """

    def __init__(
        self,
        store: SeriesStore,
        regions: RegionRegistry,
        config: GateConfig | None = None,
        journal: Journal | None = None,
    ) -> None:
        self.store = store
        self.regions = regions
        self.config = config or GateConfig()
        self.journal = journal or Journal()
        self.tickets: dict[str, HoldTicket] = {}
        self._seen_digests: set[str] = set()
        self._ticket_seq = 0
        self._key_locks: dict[tuple[str, Metric], threading.RLock] = defaultdict(
            threading.RLock
        )
        self._tickets_lock = threading.RLock()

    # -- evaluation -------------------------------------------------------------

    def preview(self, proposal: ProposedChange) -> GateDecision:
        """Decision a proposal would get, with no side effects (dry run)."""
        if proposal.kind is ChangeKind.REPLACE_HISTORY:
            values = [v for _, v in sorted(proposal.points)]
            if any(b < a for a, b in zip(values, values[1:])):
                return GateDecision(DecisionKind.BLOCK, (RULE_DECREASE,))
            if TAG_DECREASE_ALARM in proposal.tags:
                return GateDecision(DecisionKind.HOLD, (RULE_DECREASE,))
            return GateDecision(DecisionKind.ALLOW)
        assert proposal.day is not None and proposal.value is not None
        level = self.regions.resolve(proposal.region_id).level
        prev = self.store.value_before(proposal.region_id, proposal.metric, proposal.day)
        return deployment_check(prev, proposal.value, level, self.config)

    def process(self, proposal: ProposedChange, now: datetime) -> GateOutcome:
        """Evaluate and either commit, repair, hold, or block one proposal."""
        key = (proposal.region_id, proposal.metric)
        with self._key_locks[key]:
            if proposal.digest() in self._seen_digests:
                return GateOutcome(GateAction.SKIPPED_DUPLICATE, proposal)
            if proposal.kind is ChangeKind.REPLACE_HISTORY:
                return self._process_replace(proposal, now)
            return self._process_commit(proposal, now)

    def _process_replace(self, proposal: ProposedChange, now: datetime) -> GateOutcome:
        values = [v for _, v in sorted(proposal.points)]
        if any(b < a for a, b in zip(values, values[1:])):
            self._seen_digests.add(proposal.digest())
            decision = GateDecision(DecisionKind.BLOCK, (RULE_DECREASE,))
            self._journal_decision(proposal, decision, now, prev=None,
                                   tags=[TAG_NON_MONOTONIC])
            return GateOutcome(GateAction.BLOCKED, proposal, decision)
        if TAG_DECREASE_ALARM in proposal.tags:
            return self._hold(proposal, (RULE_DECREASE,), now)
        self.store.replace_history(
            proposal.region_id, proposal.metric, list(proposal.points),
            proposal.provenance(),
        )
        decision = GateDecision(DecisionKind.ALLOW)
        self._journal_decision(proposal, decision, now, prev=None)
        return GateOutcome(GateAction.COMMITTED, proposal, decision)

    def _process_commit(self, proposal: ProposedChange, now: datetime) -> GateOutcome:
        assert proposal.day is not None and proposal.value is not None
        level = self.regions.resolve(proposal.region_id).level
        prev = self.store.value_before(proposal.region_id, proposal.metric, proposal.day)
        decision = deployment_check(prev, proposal.value, level, self.config)
        if decision.kind is DecisionKind.ALLOW:
            try:
                self.store.commit_point(
                    proposal.region_id, proposal.metric, proposal.day,
                    proposal.value, proposal.provenance(),
                )
            except MonotonicityViolation:
                # Late report above an already-committed later value: needs a human.
                return self._hold(proposal, (), now, extra_tags=[TAG_CONFLICT], prev=prev)
            self._journal_decision(proposal, decision, now, prev=prev)
            return GateOutcome(GateAction.COMMITTED, proposal, decision)
        if decision.rules == (RULE_DECREASE,):
            reference = self.store.value_at(
                proposal.region_id, proposal.metric, proposal.day
            )
            reference = reference if reference is not None else prev
            kind = classify_decrease(reference, proposal.value, self.config)
            if kind is DecreaseKind.HISTORY_CORRECTION:
                repaired = clamped_insert(
                    self.store.points(proposal.region_id, proposal.metric),
                    proposal.day, proposal.value,
                )
                self.store.replace_repaired(
                    proposal.region_id, proposal.metric, repaired, proposal.provenance()
                )
                self._journal_decision(
                    proposal, decision, now, prev=prev, outcome="REPAIR"
                )
                return GateOutcome(GateAction.REPAIRED, proposal, decision)
            return self._hold(proposal, decision.rules, now,
                              extra_tags=[TAG_JUMP], prev=prev)
        return self._hold(proposal, decision.rules, now, prev=prev)

    # -- hold lifecycle --------------------------------------------------------

    def open_hold(
        self,
        proposal: ProposedChange,
        rules: tuple[int, ...],
        now: datetime,
    ) -> HoldTicket:
        """Create a HELD ticket expiring after the configured window."""
        with self._tickets_lock:
            self._ticket_seq += 1
            ticket = HoldTicket(
                ticket_id=f"T{self._ticket_seq:06d}",
                region_id=proposal.region_id,
                metric=proposal.metric,
                proposal=proposal,
                triggered_rules=rules,
                created_at=now,
                expires_at=now + self.config.hold_window,
            )
            self.tickets[ticket.ticket_id] = ticket
        return ticket

    def _hold(
        self,
        proposal: ProposedChange,
        rules: tuple[int, ...],
        now: datetime,
        extra_tags: list[str] | None = None,
        prev: int | None = None,
    ) -> GateOutcome:
        tagged = replace(proposal, tags=proposal.tags | frozenset(extra_tags or []))
        ticket = self.open_hold(tagged, rules, now)
        self._seen_digests.add(proposal.digest())
        decision = GateDecision(DecisionKind.HOLD, rules, ticket.ticket_id)
        self._journal_decision(tagged, decision, now, prev=prev,
                               ticket_id=ticket.ticket_id)
        return GateOutcome(GateAction.HELD, tagged, decision, ticket)

    def resolve_hold(
        self,
        ticket_id: str,
        resolution: Resolution,
        operator: str,
        now: datetime,
    ) -> HoldTicket:
        """Operator decision on a held ticket.

        APPROVE commits the proposal bypassing the guard rules (the data is
        still forced into monotonic shape); REJECT discards it. The second
        resolver of a race loses with AlreadyResolved.
        """
        with self._tickets_lock:
            ticket = self.tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(ticket_id)
            if ticket.state is not TicketState.HELD:
                raise AlreadyResolved(f"{ticket_id} is {ticket.state.value}")
            ticket.state = (
                TicketState.APPROVED
                if resolution is Resolution.APPROVE
                else TicketState.REJECTED
            )
            ticket.resolved_by = operator
            ticket.resolved_at = now
        if ticket.state is TicketState.APPROVED:
            self.apply_unchecked(ticket.proposal)
        self._journal_ticket(ticket, now)
        return ticket

    def expire_holds(
        self,
        now: datetime,
        source_agrees: Callable[[HoldTicket], bool] | None = None,
    ) -> list[HoldTicket]:
        """Re-evaluate tickets past their window.

        When a re-fetch of the source still reports the held value, the
        proposal auto-commits as EXPIRED_RETRIED; otherwise the ticket is
        closed as rejected (the source corrected itself, nothing to keep).
        """
        expired: list[HoldTicket] = []
        with self._tickets_lock:
            due = [
                t for t in self.tickets.values()
                if t.state is TicketState.HELD and now >= t.expires_at
            ]
        for ticket in due:
            agrees = bool(source_agrees(ticket)) if source_agrees is not None else False
            with self._tickets_lock:
                if ticket.state is not TicketState.HELD:
                    continue
                ticket.state = (
                    TicketState.EXPIRED_RETRIED if agrees else TicketState.REJECTED
                )
                ticket.resolved_by = "system:expiry"
                ticket.resolved_at = now
            if agrees:
                self.apply_unchecked(ticket.proposal)
            self._journal_ticket(ticket, now)
            expired.append(ticket)
        return expired

    def held_tickets(self) -> list[HoldTicket]:
        with self._tickets_lock:
            return [t for t in self.tickets.values() if t.state is TicketState.HELD]

    def ticket(self, ticket_id: str) -> HoldTicket:
        with self._tickets_lock:
            ticket = self.tickets.get(ticket_id)
        if ticket is None:
            raise UnknownTicket(ticket_id)
        return ticket

    def apply_unchecked(self, proposal: ProposedChange) -> None:
        """Manual-interference path: land the proposal without rule checks.

        Whatever the operator approved, the stored series must stay
        non-decreasing, so conflicting neighbors are reconciled around the
        approved point instead of rejecting it.
        """
        provenance = proposal.provenance()
        if proposal.kind is ChangeKind.REPLACE_HISTORY:
            self.store.replace_history(
                proposal.region_id, proposal.metric, list(proposal.points), provenance
            )
            return
        assert proposal.day is not None and proposal.value is not None
        key_lock = self._key_locks[(proposal.region_id, proposal.metric)]
        with key_lock:
            try:
                self.store.commit_point(
                    proposal.region_id, proposal.metric, proposal.day,
                    proposal.value, provenance,
                )
            except MonotonicityViolation:
                repaired = clamped_insert(
                    self.store.points(proposal.region_id, proposal.metric),
                    proposal.day, proposal.value,
                )
                repaired = [
                    (d, max(v, proposal.value) if d > proposal.day else v)
                    for d, v in repaired
                ]
                self.store.replace_repaired(
                    proposal.region_id, proposal.metric, repaired, provenance
                )

    # -- journal -----------------------------------------------------------------

    def _journal_decision(
        self,
        proposal: ProposedChange,
        decision: GateDecision,
        now: datetime,
        prev: int | None,
        outcome: str | None = None,
        tags: list[str] | None = None,
        ticket_id: str | None = None,
    ) -> None:
        self.journal.record(
            {
                "kind": "decision",
                "ts": now.isoformat(),
                "source_id": proposal.source_id,
                "region_id": proposal.region_id,
                "metric": proposal.metric.value,
                "change": proposal.kind.value,
                "prev": prev,
                "proposed": (
                    proposal.value
                    if proposal.kind is ChangeKind.COMMIT_POINT
                    else [[d.isoformat(), v] for d, v in proposal.points]
                ),
                "decision": outcome or decision.kind.value,
                "rules": list(decision.rules),
                "tags": sorted(set(proposal.tags) | set(tags or [])),
                "ticket_id": ticket_id,
            }
        )

    def _journal_ticket(self, ticket: HoldTicket, now: datetime) -> None:
        self.journal.record(
            {
                "kind": "ticket",
                "ts": now.isoformat(),
                "ticket_id": ticket.ticket_id,
                "event": ticket.state.value,
                "region_id": ticket.region_id,
                "metric": ticket.metric.value,
                "operator": ticket.resolved_by,
            }
        )

    # -- snapshotting ----------------------------------------------------------

    def to_state(self) -> dict:
        with self._tickets_lock:
            return {
                "ticket_seq": self._ticket_seq,
                "seen_digests": sorted(self._seen_digests),
                "tickets": [
                    {
                        "ticket_id": t.ticket_id,
                        "region_id": t.region_id,
                        "metric": t.metric.value,
                        "triggered_rules": list(t.triggered_rules),
                        "created_at": t.created_at.isoformat(),
                        "expires_at": t.expires_at.isoformat(),
                        "state": t.state.value,
                        "resolved_by": t.resolved_by,
                        "resolved_at": (
                            t.resolved_at.isoformat() if t.resolved_at else None
                        ),
                        "note": t.note,
                        "proposal": {
                            "kind": t.proposal.kind.value,
                            "source_id": t.proposal.source_id,
                            "region_id": t.proposal.region_id,
                            "metric": t.proposal.metric.value,
                            "fetched_at": t.proposal.fetched_at.isoformat(),
                            "day": t.proposal.day.isoformat() if t.proposal.day else None,
                            "value": t.proposal.value,
                            "points": [[d.isoformat(), v] for d, v in t.proposal.points],
                            "tags": sorted(t.proposal.tags),
                        },
                    }
                    for t in self.tickets.values()
                ],
            }

    def load_state(self, state: dict) -> None:
        with self._tickets_lock:
            self._ticket_seq = state.get("ticket_seq", 0)
            self._seen_digests = set(state.get("seen_digests", []))
            self.tickets.clear()
            for raw in state.get("tickets", []):
                p = raw["proposal"]
                proposal = ProposedChange(
                    kind=ChangeKind(p["kind"]),
                    source_id=p["source_id"],
                    region_id=p["region_id"],
                    metric=Metric(p["metric"]),
                    fetched_at=datetime.fromisoformat(p["fetched_at"]),
                    day=date.fromisoformat(p["day"]) if p["day"] else None,
                    value=p["value"],
                    points=tuple((date.fromisoformat(d), v) for d, v in p["points"]),
                    tags=frozenset(p.get("tags", [])),
                )
                ticket = HoldTicket(
                    ticket_id=raw["ticket_id"],
                    region_id=raw["region_id"],
                    metric=Metric(raw["metric"]),
                    proposal=proposal,
                    triggered_rules=tuple(raw["triggered_rules"]),
                    created_at=datetime.fromisoformat(raw["created_at"]),
                    expires_at=datetime.fromisoformat(raw["expires_at"]),
                    state=TicketState(raw["state"]),
                    resolved_by=raw.get("resolved_by"),
                    resolved_at=(
                        datetime.fromisoformat(raw["resolved_at"])
                        if raw.get("resolved_at")
                        else None
                    ),
                    note=raw.get("note", ""),
                )
                self.tickets[ticket.ticket_id] = ticket

"""Crowd-sourced issue intake and triage.

Users report data problems and tips through nine fixed categories; each
issue walks a one-way state machine (open, assigned, then resolved or
invalid) and case reports must arrive with a region and at least one
supporting link.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime
from enum import Enum

from .errors import InvalidTransition, MissingLink, MissingRegion, UnknownIssue, UnknownRegion
from .regions import RegionRegistry


class IssueCategory(Enum):
    NEW_CASE = "NEW_CASE"
    RECOVER_CASE = "RECOVER_CASE"
    DEATH_CASE = "DEATH_CASE"
    ERROR_REPORT = "ERROR_REPORT"
    FEATURE_REQUEST = "FEATURE_REQUEST"
    BREAKING_NEWS = "BREAKING_NEWS"
    FURTHER_DETAILS = "FURTHER_DETAILS"
    TESTING_LOCATION = "TESTING_LOCATION"
    QUESTION = "QUESTION"


CASE_CATEGORIES = frozenset(
    {IssueCategory.NEW_CASE, IssueCategory.RECOVER_CASE, IssueCategory.DEATH_CASE}
)


class IssueState(Enum):
    OPEN = "OPEN"
    ASSIGNED = "ASSIGNED"
    RESOLVED = "RESOLVED"
    INVALID = "INVALID"


class IssueOutcome(Enum):
    RESOLVED = "RESOLVED"
    INVALID = "INVALID"


@dataclass
class IssueReport:
    issue_id: str
    category: IssueCategory
    body: str
    submitted_at: datetime
    region_id: str | None = None
    links: tuple[str, ...] = ()
    state: IssueState = IssueState.OPEN
    assignee: str | None = None
    resolution_note: str | None = None
    resulting_records: tuple[str, ...] = ()


class IssueDesk:
    """Issue intake with per-issue serialized mutations."""

    def __init__(self, regions: RegionRegistry) -> None:
        self.regions = regions
        self._lock = threading.RLock()
        self._issues: dict[str, IssueReport] = {}
        self._seq = 0

    def submit(
        self,
        category: IssueCategory,
        body: str,
        now: datetime,
        region_id: str | None = None,
        links: tuple[str, ...] = (),
    ) -> IssueReport:
        """Open a new issue; case categories need a region and a link."""
        if not body.strip():
            raise ValueError("issue body must be non-empty")
        if category in CASE_CATEGORIES:
            if not links:
                raise MissingLink(category.value)
            if region_id is None:
                raise MissingRegion(category.value)
        if region_id is not None and region_id not in self.regions:
            raise UnknownRegion(region_id)
        with self._lock:
            self._seq += 1
            issue = IssueReport(
                issue_id=f"I{self._seq:06d}",
                category=category,
                body=body,
                submitted_at=now,
                region_id=region_id,
                links=tuple(links),
            )
            self._issues[issue.issue_id] = issue
            return issue

    def assign(self, issue_id: str, operator: str) -> IssueReport:
        with self._lock:
            issue = self._get(issue_id)
            if issue.state is not IssueState.OPEN:
                raise InvalidTransition(f"{issue_id} is {issue.state.value}, not OPEN")
            issue.state = IssueState.ASSIGNED
            issue.assignee = operator
            return issue

    def resolve(
        self,
        issue_id: str,
        outcome: IssueOutcome,
        note: str,
        resulting_records: tuple[str, ...] = (),
    ) -> IssueReport:
        """Close an assigned issue; a note is mandatory, reopening impossible."""
        if not note.strip():
            raise ValueError("resolution requires a note")
        with self._lock:
            issue = self._get(issue_id)
            if issue.state is not IssueState.ASSIGNED:
                raise InvalidTransition(
                    f"{issue_id} is {issue.state.value}, not ASSIGNED"
                )
            issue.state = IssueState(outcome.value)
            issue.resolution_note = note
            issue.resulting_records = tuple(resulting_records)
            return issue

    def get(self, issue_id: str) -> IssueReport:
        with self._lock:
            return self._get(issue_id)

    def _get(self, issue_id: str) -> IssueReport:
        issue = self._issues.get(issue_id)
        if issue is None:
            raise UnknownIssue(issue_id)
        return issue

    def list_issues(
        self,
        state: IssueState | None = None,
        category: IssueCategory | None = None,
    ) -> list[IssueReport]:
        with self._lock:
            issues = sorted(self._issues.values(), key=lambda i: i.issue_id)
        if state is not None:
            issues = [i for i in issues if i.state is state]
        if category is not None:
            issues = [i for i in issues if i.category is category]
        return issues

    def queue_stats(self) -> dict:
        """Exact tallies per category and state; state buckets sum to the total."""
        with self._lock:
            issues = list(self._issues.values())
        by_state = {state.value: 0 for state in IssueState}
        by_category: dict[str, dict[str, int]] = {
            cat.value: {state.value: 0 for state in IssueState} for cat in IssueCategory
        }
        for issue in issues:
            by_state[issue.state.value] += 1
            by_category[issue.category.value][issue.state.value] += 1
        return {"total": len(issues), "by_state": by_state, "by_category": by_category}

    def export(self) -> str:
        lines = [
            json.dumps(
                {
                    "issue_id": i.issue_id,
                    "category": i.category.value,
                    "state": i.state.value,
                    "region_id": i.region_id,
                    "links": list(i.links),
                    "body": i.body,
                    "submitted_at": i.submitted_at.isoformat(),
                    "assignee": i.assignee,
                    "resolution_note": i.resolution_note,
                    "resulting_records": list(i.resulting_records),
                },
                sort_keys=True,
            )
            for i in self.list_issues()
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    # -- snapshotting ---------------------------------------------------------

    def to_state(self) -> dict:
        with self._lock:
            return {
                "seq": self._seq,
                "issues": [
                    {
                        "issue_id": i.issue_id,
                        "category": i.category.value,
                        "body": i.body,
                        "submitted_at": i.submitted_at.isoformat(),
                        "region_id": i.region_id,
                        "links": list(i.links),
                        "state": i.state.value,
                        "assignee": i.assignee,
                        "resolution_note": i.resolution_note,
                        "resulting_records": list(i.resulting_records),
                    }
                    for i in self._issues.values()
                ],
            }

    def load_state(self, state: dict) -> None:
        with self._lock:
            self._seq = state.get("seq", 0)
            self._issues.clear()
            for raw in state.get("issues", []):
                issue = IssueReport(
                    issue_id=raw["issue_id"],
                    category=IssueCategory(raw["category"]),
                    body=raw["body"],
                    submitted_at=datetime.fromisoformat(raw["submitted_at"]),
                    region_id=raw.get("region_id"),
                    links=tuple(raw.get("links", ())),
                    state=IssueState(raw["state"]),
                    assignee=raw.get("assignee"),
                    resolution_note=raw.get("resolution_note"),
                    resulting_records=tuple(raw.get("resulting_records", ())),
                )
                self._issues[issue.issue_id] = issue

"""HTTP interface over the store, gate, reconciler, and issue desk.

Read endpoints are open and side-effect free; mutating endpoints require
the configured bearer token and persist state before responding. Counts
are integers; shares and rates are exact rationals rendered as strings
(``"2/5"``) so consumers can verify them without float drift.
"""

from __future__ import annotations

from datetime import date, datetime, timezone
from fractions import Fraction
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import errors
from .gate import HoldTicket, Resolution, TicketState
from .issues import IssueCategory, IssueOutcome, IssueState
from .reconcile import DiaryStatus
from .regions import Region
from .series import Metric, SeriesFlag, align_at_threshold
from .runtime import AppState

ERROR_STATUS = {
    errors.UnknownRegion: 404,
    errors.UnknownTicket: 404,
    errors.UnknownIssue: 404,
    errors.AlreadyResolved: 409,
    errors.InvalidTransition: 409,
    errors.MissingLink: 422,
    errors.MissingRegion: 422,
    errors.EmptyDateRange: 422,
    errors.ZeroPopulation: 422,
    errors.MalformedPayload: 422,
    errors.NotADecrease: 422,
    errors.NonMonotonicPayload: 422,
    errors.MonotonicityViolation: 409,
}


def _error_tag(exc: Exception) -> str:
    name = type(exc).__name__
    out = [name[0].lower()]
    for ch in name[1:]:
        if ch.isupper():
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


class HoldDecisionBody(BaseModel):
    decision: str
    operator: str = "operator"


class IssueBody(BaseModel):
    category: str
    body: str
    region_id: str | None = None
    links: list[str] = []


class AssignBody(BaseModel):
    operator: str


class ResolveBody(BaseModel):
    outcome: str
    note: str
    record_ids: list[str] = []


def region_dict(region: Region) -> dict:
    return {
        "region_id": region.region_id,
        "name_en": region.name_en,
        "name_local": region.name_local,
        "level": region.level.value,
        "parent_id": region.parent_id,
        "population": region.population,
        "is_unassigned": region.is_unassigned,
    }


def ticket_dict(ticket: HoldTicket, previous_value: int | None = None) -> dict:
    proposal = ticket.proposal
    return {
        "ticket_id": ticket.ticket_id,
        "region_id": ticket.region_id,
        "metric": ticket.metric.value,
        "state": ticket.state.value,
        "triggered_rules": list(ticket.triggered_rules),
        "created_at": ticket.created_at.isoformat(),
        "expires_at": ticket.expires_at.isoformat(),
        "resolved_by": ticket.resolved_by,
        "previous_value": previous_value,
        "proposed": {
            "kind": proposal.kind.value,
            "day": proposal.day.isoformat() if proposal.day else None,
            "value": proposal.value,
            "points": [[d.isoformat(), v] for d, v in proposal.points],
            "tags": sorted(proposal.tags),
            "source_id": proposal.source_id,
        },
    }


def issue_dict(issue) -> dict:
    return {
        "issue_id": issue.issue_id,
        "category": issue.category.value,
        "state": issue.state.value,
        "region_id": issue.region_id,
        "links": list(issue.links),
        "body": issue.body,
        "submitted_at": issue.submitted_at.isoformat(),
        "assignee": issue.assignee,
        "resolution_note": issue.resolution_note,
        "resulting_records": list(issue.resulting_records),
    }


def diary_dict(entry) -> dict:
    disc = entry.discrepancy
    return {
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
        "staleness_note": dict(disc.staleness_note),
    }


def _fraction_str(value: Fraction | None) -> str | None:
    return None if value is None else str(value)


def create_app(state: AppState, console_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="casetrack", version="0.1.0")

    def now() -> datetime:
        return datetime.now(timezone.utc)

    def require_token(authorization: str | None = Header(default=None)) -> None:
        token = state.config.token
        if not token:
            return
        if authorization != f"Bearer {token}":
            raise PermissionError("missing or bad bearer token")

    @app.exception_handler(errors.CaseTrackError)
    async def domain_error(request: Request, exc: errors.CaseTrackError):
        status = 422
        for klass, code in ERROR_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(
            status_code=status,
            content={"error": _error_tag(exc), "message": str(exc)},
        )

    @app.exception_handler(PermissionError)
    async def auth_error(request: Request, exc: PermissionError):
        return JSONResponse(status_code=401,
                            content={"error": "unauthorized", "message": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422,
                            content={"error": "validation_error", "message": str(exc)})

    def parse_metric(name: str) -> Metric:
        try:
            return Metric(name.lower())
        except ValueError:
            raise ValueError(f"unknown metric {name!r}")

    def parse_day(raw: str | None) -> date | None:
        return date.fromisoformat(raw) if raw else None

    # -- regions ---------------------------------------------------------------

    @app.get("/regions")
    def regions(parent: str | None = None):
        if parent is None:
            listed = state.regions.countries()
        else:
            listed = state.regions.children(parent)
        return {"regions": [region_dict(r) for r in listed]}

    # -- series ----------------------------------------------------------------

    @app.get("/series/{region_id}/{metric}")
    def series(
        region_id: str,
        metric: str,
        from_day: str | None = Query(default=None, alias="from"),
        to_day: str | None = Query(default=None, alias="to"),
        scale: str = "linear",
        align_threshold: int | None = None,
    ):
        if scale not in ("linear", "log"):
            raise ValueError(f"unknown scale {scale!r}")
        m = parse_metric(metric)
        state.regions.resolve(region_id)
        points = state.store.points(region_id, m)
        lo, hi = parse_day(from_day), parse_day(to_day)
        if lo is not None:
            points = [(d, v) for d, v in points if d >= lo]
        if hi is not None:
            points = [(d, v) for d, v in points if d <= hi]
        payload = {
            "region_id": region_id,
            "metric": m.value,
            "scale": scale,
            "points": [{"date": d.isoformat(), "value": v} for d, v in points],
            "flags": [],
        }
        if align_threshold is not None:
            aligned = align_at_threshold(points, align_threshold)
            if aligned is SeriesFlag.BELOW_THRESHOLD:
                payload["aligned"] = []
                payload["flags"].append(SeriesFlag.BELOW_THRESHOLD.value)
            else:
                payload["aligned"] = [
                    {"day": k, "value": aligned[k]} for k in sorted(aligned)
                ]
            payload["align_threshold"] = align_threshold
        return payload

    # -- snapshot ----------------------------------------------------------------

    @app.get("/snapshot/{region_id}")
    def snapshot(region_id: str, date_: str | None = Query(default=None, alias="date")):
        region = state.regions.resolve(region_id)
        day = parse_day(date_)
        row = state.store.stat_rows([region_id], day=day,
                                    contacts=state.config.contacts)[0]
        flags = []
        active = None
        probe_day = day or (state.store.latest(region_id, Metric.CONFIRMED) or (None,))[0]
        if probe_day is not None and state.store.has_data(
            region_id, Metric.CONFIRMED, probe_day
        ):
            result = state.store.derive_active(region_id, probe_day)
            if result is SeriesFlag.DATA_INCONSISTENT:
                flags.append(SeriesFlag.DATA_INCONSISTENT.value)
            else:
                active = result
        return {
            "region_id": region_id,
            "date": probe_day.isoformat() if probe_day else None,
            "population": region.population,
            "confirmed": row.confirmed,
            "deceased": row.deceased,
            "recovered": row.recovered,
            "active": active,
            "confirmed_per_million": _fraction_str(row.confirmed_per_million),
            "deceased_per_million": _fraction_str(row.deceased_per_million),
            "fatality_rate": _fraction_str(row.fatality_rate),
            "health_dept_contact": row.health_dept_contact,
            "flags": flags,
        }

    # -- children stats -------------------------------------------------------------

    @app.get("/children-stats/{region_id}")
    def children_stats(
        region_id: str,
        metric: str = "confirmed",
        date_: str | None = Query(default=None, alias="date"),
    ):
        m = parse_metric(metric)
        state.regions.resolve(region_id)
        day = parse_day(date_) or _latest_day_for(region_id, m)
        entries = []
        for child in state.regions.children(region_id):
            value = (
                state.reconciler.display_total(child.region_id, m, day) if day else 0
            )
            entries.append((child, value))
        total = sum(v for _, v in entries)
        own = state.store.value_at(region_id, m, day) if day else None
        flags = []
        non_bucket = sum(v for c, v in entries if not c.is_unassigned)
        if own is not None and non_bucket > own:
            flags.append("CHILD_LEAD")
        return {
            "region_id": region_id,
            "metric": m.value,
            "date": day.isoformat() if day else None,
            "total": total,
            "entries": [
                {
                    "region_id": child.region_id,
                    "name_en": child.name_en,
                    "is_unassigned": child.is_unassigned,
                    "value": value,
                    "share": str(Fraction(value, total)) if total > 0 else None,
                }
                for child, value in entries
            ],
            "flags": flags,
        }

    def _latest_day_for(region_id: str, metric: Metric) -> date | None:
        days = []
        latest = state.store.latest(region_id, metric)
        if latest:
            days.append(latest[0])
        for child in state.regions.children(region_id):
            latest = state.store.latest(child.region_id, metric)
            if latest:
                days.append(latest[0])
        return max(days) if days else None

    # -- burn-down --------------------------------------------------------------------

    @app.get("/burndown/{region_id}")
    def burndown(region_id: str):
        state.regions.resolve(region_id)
        confirmed = state.store.points(region_id, Metric.CONFIRMED)
        flags: list[str] = []
        days, active, deceased, recovered = [], [], [], []
        for d, _ in confirmed:
            days.append(d.isoformat())
            result = state.store.derive_active(region_id, d)
            if result is SeriesFlag.DATA_INCONSISTENT:
                if SeriesFlag.DATA_INCONSISTENT.value not in flags:
                    flags.append(SeriesFlag.DATA_INCONSISTENT.value)
                active.append(None)
            else:
                active.append(result)
            deceased.append(state.store.value_at(region_id, Metric.DECEASED, d) or 0)
            recovered.append(state.store.value_at(region_id, Metric.RECOVERED, d) or 0)
        return {
            "region_id": region_id,
            "dates": days,
            "active": active,
            "deceased": deceased,
            "recovered": recovered,
            "flags": flags,
        }

    # -- comparison ---------------------------------------------------------------------

    @app.get("/compare")
    def compare(
        regions: str,
        metric: str = "confirmed",
        align_threshold: int = 100,
    ):
        m = parse_metric(metric)
        listed, excluded = [], []
        for region_id in [r.strip() for r in regions.split(",") if r.strip()]:
            state.regions.resolve(region_id)
            aligned = align_at_threshold(state.store.points(region_id, m), align_threshold)
            if aligned is SeriesFlag.BELOW_THRESHOLD:
                excluded.append(
                    {"region_id": region_id, "reason": SeriesFlag.BELOW_THRESHOLD.value}
                )
            else:
                listed.append(
                    {
                        "region_id": region_id,
                        "points": [
                            {"day": k, "value": aligned[k]} for k in sorted(aligned)
                        ],
                    }
                )
        return {
            "metric": m.value,
            "align_threshold": align_threshold,
            "series": listed,
            "excluded": excluded,
        }

    # -- holds ------------------------------------------------------------------------

    @app.get("/holds")
    def holds(state_: str | None = Query(default=None, alias="state")):
        tickets = list(state.gate.tickets.values())
        if state_ is not None:
            wanted = TicketState(state_)
            tickets = [t for t in tickets if t.state is wanted]
        out = []
        for t in sorted(tickets, key=lambda t: t.ticket_id):
            prev = None
            if t.proposal.day is not None:
                prev = state.store.value_before(t.region_id, t.metric, t.proposal.day)
            out.append(ticket_dict(t, previous_value=prev))
        return {"tickets": out}

    @app.post("/holds/{ticket_id}/decision")
    def decide_hold(ticket_id: str, body: HoldDecisionBody,
                    _auth: None = Depends(require_token)):
        resolution = Resolution(body.decision.upper())
        ticket = state.gate.resolve_hold(ticket_id, resolution, body.operator, now())
        state.save()
        return ticket_dict(ticket)

    # -- diary -------------------------------------------------------------------------

    @app.get("/diary")
    def diary(status: str | None = None):
        wanted = DiaryStatus(status) if status else None
        entries = state.reconciler.diary_entries(wanted)
        return {"entries": [diary_dict(e) for e in entries]}

    # -- issues -------------------------------------------------------------------------

    def journal_issue(issue, event: str, operator: str | None = None) -> None:
        state.journal.record(
            {
                "kind": "issue",
                "ts": now().isoformat(),
                "issue_id": issue.issue_id,
                "event": event,
                "category": issue.category.value,
                "operator": operator,
            }
        )

    @app.post("/issues")
    def submit_issue(body: IssueBody, _auth: None = Depends(require_token)):
        issue = state.desk.submit(
            IssueCategory(body.category),
            body.body,
            now(),
            region_id=body.region_id,
            links=tuple(body.links),
        )
        journal_issue(issue, "SUBMITTED")
        state.save()
        return issue_dict(issue)

    @app.get("/issues")
    def list_issues(state_: str | None = Query(default=None, alias="state"),
                    category: str | None = None):
        issues = state.desk.list_issues(
            state=IssueState(state_) if state_ else None,
            category=IssueCategory(category) if category else None,
        )
        return {"issues": [issue_dict(i) for i in issues]}

    @app.post("/issues/{issue_id}/assign")
    def assign_issue(issue_id: str, body: AssignBody,
                     _auth: None = Depends(require_token)):
        issue = state.desk.assign(issue_id, body.operator)
        journal_issue(issue, "ASSIGNED", operator=body.operator)
        state.save()
        return issue_dict(issue)

    @app.post("/issues/{issue_id}/resolve")
    def resolve_issue(issue_id: str, body: ResolveBody,
                      _auth: None = Depends(require_token)):
        issue = state.desk.resolve(
            issue_id,
            IssueOutcome(body.outcome.upper()),
            body.note,
            resulting_records=tuple(body.record_ids),
        )
        journal_issue(issue, issue.state.value, operator=issue.assignee)
        state.save()
        return issue_dict(issue)

    # -- export -------------------------------------------------------------------------

    @app.get("/export/ct.csv")
    def export_ct(metric: str = "confirmed",
                  regions: str | None = None):
        m = parse_metric(metric)
        region_ids = None
        if regions:
            region_ids = [r.strip() for r in regions.split(",") if r.strip()]
            for region_id in region_ids:
                state.regions.resolve(region_id)
        text = state.store.export_ct_csv(m, region_ids)
        return PlainTextResponse(text, media_type="text/csv")

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app

"""Operational command line: ingest, validate, backfill, export, serve.

Exit codes: 0 success, 1 operational failure, 2 usage error. ``validate``
is the pre-deployment dry run: it prints the gate decision for every row
of a payload without committing anything.
"""

from __future__ import annotations

import argparse
import sys
import time
from datetime import date, datetime, timezone
from pathlib import Path

from .api import create_app
from .errors import CaseTrackError
from .gate import ChangeKind, Resolution
from .runtime import AppConfig, AppState
from .series import Metric


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casetrack",
        description="Federated case-count ingestion and quality control.",
    )
    parser.add_argument("--config", required=True, help="path to the config file")
    parser.add_argument("--store", default=None,
                        help="override the store directory from the config")
    parser.add_argument("--token", default=None,
                        help="override the API bearer token from the config")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="one-shot poll of all due sources")

    poll = sub.add_parser("poll", help="run the continuous polling scheduler")
    poll.add_argument("--cycles", type=int, default=0,
                      help="number of cycles to run (0 = forever)")
    poll.add_argument("--interval-seconds", type=float, default=60.0,
                      help="sleep between scheduler passes")

    backfill = sub.add_parser("backfill", help="apply dated archives for one source")
    backfill.add_argument("source_id")
    backfill.add_argument("archives", nargs="+", metavar="DATE=PATH",
                          help="archive payloads, oldest first")

    validate = sub.add_parser(
        "validate", help="dry-run the gate rules over a payload without committing"
    )
    validate.add_argument("payload", help="path to a payload file")
    validate.add_argument("--source", required=True, help="source id for the payload")

    export = sub.add_parser("export-ct", help="write the compact-table CSV to stdout")
    export.add_argument("--metric", default="confirmed")
    export.add_argument("--regions", default=None, help="comma-separated region ids")

    holds = sub.add_parser("holds", help="list or resolve hold tickets")
    holds_sub = holds.add_subparsers(dest="holds_command", required=True)
    holds_sub.add_parser("list")
    for action in ("approve", "reject"):
        cmd = holds_sub.add_parser(action)
        cmd.add_argument("ticket_id")
        cmd.add_argument("--operator", default="cli")

    diary = sub.add_parser("diary", help="inspect the discrepancy diary")
    diary_sub = diary.add_subparsers(dest="diary_command", required=True)
    diary_sub.add_parser("list")

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--console-dir", default=None,
                       help="static directory with the review console bundle")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AppConfig.load(args.config)
        if args.store is not None:
            config.store_dir = Path(args.store)
        if args.token is not None:
            config.token = args.token
        handler = {
            "ingest": cmd_ingest,
            "poll": cmd_poll,
            "backfill": cmd_backfill,
            "validate": cmd_validate,
            "export-ct": cmd_export_ct,
            "holds": cmd_holds,
            "diary": cmd_diary,
            "serve": cmd_serve,
        }[args.command]
        return handler(args, config)
    except CaseTrackError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cmd_ingest(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    reports = state.pipeline.run_due(datetime.now(timezone.utc))
    state.save()
    for report in reports:
        if report.fetch_error:
            print(f"{report.source_id}: fetch failed: {report.fetch_error}",
                  file=sys.stderr)
        else:
            actions = [o.action.value for o in report.outcomes]
            print(f"{report.source_id}: {len(actions)} change(s) "
                  f"{actions}, {report.dropped_unchanged} unchanged")
    if not reports:
        print("no sources due")
    return 0


def cmd_poll(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    cycle = 0
    try:
        while True:
            cycle += 1
            now = datetime.now(timezone.utc)
            reports = state.pipeline.run_due(now)
            expired = state.pipeline.expire_holds(now)
            state.save()
            print(f"cycle {cycle}: {len(reports)} source(s) polled, "
                  f"{len(expired)} hold(s) expired")
            if args.cycles and cycle >= args.cycles:
                return 0
            time.sleep(args.interval_seconds)
    except KeyboardInterrupt:
        state.save()
        return 0


def cmd_backfill(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    descriptor = state.pipeline.sources.get(args.source_id)
    if descriptor is None:
        print(f"error: unknown source {args.source_id}", file=sys.stderr)
        return 1
    archives = []
    for spec in args.archives:
        day_text, _, path = spec.partition("=")
        if not path:
            print(f"error: archive spec {spec!r} is not DATE=PATH", file=sys.stderr)
            return 1
        archives.append((date.fromisoformat(day_text), Path(path).read_bytes()))
    reports = state.pipeline.backfill(descriptor, archives)
    state.save()
    committed = sum(len(r.outcomes) for r in reports)
    print(f"backfilled {args.source_id}: {len(archives)} archive(s), "
          f"{committed} change(s)")
    return 0


def cmd_validate(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    descriptor = state.pipeline.sources.get(args.source)
    if descriptor is None:
        print(f"error: unknown source {args.source}", file=sys.stderr)
        return 1
    raw = Path(args.payload).read_bytes()
    batch = state.pipeline.parse(raw, descriptor, datetime.now(timezone.utc))
    for key in batch.unmatched_keys:
        print(f"SKIP unknown region key {key!r}")
    proposals = state.pipeline.build_proposals(batch, descriptor)
    for proposal in proposals:
        decision = state.gate.preview(proposal)
        rules = "{" + ",".join(str(r) for r in decision.rules) + "}"
        if proposal.kind is ChangeKind.COMMIT_POINT:
            prev = state.store.value_before(
                proposal.region_id, proposal.metric, proposal.day
            )
            detail = f"prev={prev} proposed={proposal.value} date={proposal.day}"
        else:
            detail = f"replace {len(proposal.points)} point(s)"
        print(f"{decision.kind.value} rules={rules} "
              f"{proposal.region_id} {proposal.metric.value} {detail}")
    if not proposals:
        print("no changes proposed (payload matches stored data)")
    return 0  # dry run succeeds even when rows fail


def cmd_export_ct(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    region_ids = None
    if args.regions:
        region_ids = [r.strip() for r in args.regions.split(",") if r.strip()]
    sys.stdout.write(state.store.export_ct_csv(Metric(args.metric.lower()), region_ids))
    return 0


def cmd_holds(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    if args.holds_command == "list":
        for ticket in state.gate.held_tickets():
            rules = ",".join(str(r) for r in ticket.triggered_rules)
            print(f"{ticket.ticket_id} {ticket.region_id} {ticket.metric.value} "
                  f"rules={{{rules}}} proposed={ticket.proposal.value} "
                  f"expires={ticket.expires_at.isoformat()}")
        if not state.gate.held_tickets():
            print("no held tickets")
        return 0
    resolution = Resolution.APPROVE if args.holds_command == "approve" else Resolution.REJECT
    ticket = state.gate.resolve_hold(
        args.ticket_id, resolution, args.operator, datetime.now(timezone.utc)
    )
    state.save()
    print(f"{ticket.ticket_id} -> {ticket.state.value}")
    return 0


def cmd_diary(args: argparse.Namespace, config: AppConfig) -> int:
    state = AppState.from_config(config)
    entries = state.reconciler.diary_entries()
    for entry in entries:
        disc = entry.discrepancy
        print(f"{entry.entry_id} [{entry.status.value}] {disc.parent_region} "
              f"{disc.metric.value} parent={disc.parent_value} "
              f"children={disc.children_sum} since={entry.first_seen.date()}")
    if not entries:
        print("diary is empty")
    return 0


def cmd_serve(args: argparse.Namespace, config: AppConfig) -> int:
    import uvicorn

    if args.port is not None:
        config.port = args.port
    state = AppState.from_config(config)
    app = create_app(state, console_dir=args.console_dir)
    uvicorn.run(app, host=args.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())

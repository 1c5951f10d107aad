#!/usr/bin/env python3
"""Build a seeded casetrack workspace for the console session test.

Creates, inside the directory given as argv[1]:
  config.yaml, regions.yaml, store/state.json, store/journal.jsonl

Seeded content: two regions with confirmed curves crossing 100, one held
deployment (102 -> 102103 transit-state row), and one OPEN issue per
report category.
"""

from __future__ import annotations

import sys
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import yaml

from casetrack.gate import ChangeKind, GateAction, ProposedChange
from casetrack.issues import CASE_CATEGORIES, IssueCategory
from casetrack.runtime import AppConfig, AppState, load_region_records
from casetrack.regions import RegionRegistry
from casetrack.series import Metric, Provenance

TOKEN = "console-token"
T0 = datetime(2020, 4, 15, 12, 0, tzinfo=timezone.utc)
D = date(2020, 3, 1)


def main() -> int:
    workdir = Path(sys.argv[1])
    workdir.mkdir(parents=True, exist_ok=True)
    regions = [
        {"region_id": "IT", "name_en": "Italy", "level": "COUNTRY"},
        {"region_id": "IT-25", "name_en": "Lombardia", "level": "DIVISION",
         "parent_id": "IT", "population": 10_000_000},
        {"region_id": "US", "name_en": "United States", "level": "COUNTRY"},
        {"region_id": "US-WA", "name_en": "Washington", "level": "DIVISION",
         "parent_id": "US"},
        {"region_id": "US-WA-033", "name_en": "King County", "level": "SUBDIVISION",
         "parent_id": "US-WA", "population": 2_250_000},
        {"region_id": "US-NY", "name_en": "New York", "level": "DIVISION",
         "parent_id": "US"},
        {"region_id": "US-NY-061", "name_en": "New York County", "level": "SUBDIVISION",
         "parent_id": "US-NY", "population": 1_630_000},
    ]
    (workdir / "regions.yaml").write_text(yaml.safe_dump(regions))
    (workdir / "config.yaml").write_text(
        yaml.safe_dump(
            {
                "region_registry": "regions.yaml",
                "store_dir": "store",
                "token": TOKEN,
            }
        )
    )

    config = AppConfig.load(workdir / "config.yaml")
    registry = RegionRegistry.from_records(load_region_records(config.region_registry))
    state = AppState(registry, [], config)
    prov = Provenance("seed", T0)

    # two aligned-comparison curves crossing 100 on different calendar days
    for i, value in enumerate([40, 80, 120, 260, 400]):
        state.store.commit_point("IT-25", Metric.CONFIRMED, D + timedelta(days=i),
                                 value, prov)
    for i, value in enumerate([20, 60, 150, 300]):
        state.store.commit_point("US-WA-033", Metric.CONFIRMED,
                                 D + timedelta(days=3 + i), value, prov)

    # the held transit-state deployment
    state.store.commit_point("US-NY-061", Metric.CONFIRMED, date(2020, 4, 14), 102, prov)
    outcome = state.gate.process(
        ProposedChange(
            kind=ChangeKind.COMMIT_POINT,
            source_id="county-feed",
            region_id="US-NY-061",
            metric=Metric.CONFIRMED,
            fetched_at=T0,
            day=date(2020, 4, 15),
            value=102103,
        ),
        now=T0,
    )
    assert outcome.action is GateAction.HELD, outcome

    # one OPEN issue per report category
    for i, category in enumerate(IssueCategory):
        kwargs = {}
        if category in CASE_CATEGORIES:
            kwargs = {"region_id": "US-WA-033", "links": ("http://news/seed",)}
        state.desk.submit(category, f"seed report {i}: {category.value}", T0, **kwargs)

    state.save()
    print(workdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Application assembly: config file, wiring, and store-directory persistence.

A store directory holds two files: ``state.json`` (full snapshot, written
atomically) and ``journal.jsonl`` (append-only audit log). One-shot CLI
commands load, act, save; the API server saves after each mutation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gate import GateConfig, QualityGate
from .ingest import Fetcher, IngestPipeline
from .issues import IssueDesk
from .journal import Journal
from .reconcile import Reconciler, ReconcilerConfig
from .regions import RegionRegistry
from .sources import SourceDescriptor
from .store import SeriesStore

STATE_FILE = "state.json"
JOURNAL_FILE = "journal.jsonl"

ENV_PORT = "CASETRACK_PORT"
ENV_TOKEN = "CASETRACK_TOKEN"


@dataclass
class AppConfig:
    region_registry: Path
    source_registry: Path | None = None
    store_dir: Path | None = None
    gate: dict = field(default_factory=dict)
    staleness_window_hours: float = 24.0
    diary_horizon_days: float = 7.0
    token: str = ""
    port: int = 8000
    contacts: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path | str) -> "AppConfig":
        path = Path(path)
        raw = yaml.safe_load(path.read_text()) or {}
        base = path.parent

        def resolve(p: str | None) -> Path | None:
            if p is None:
                return None
            candidate = Path(p)
            return candidate if candidate.is_absolute() else base / candidate

        config = cls(
            region_registry=resolve(raw["region_registry"]),
            source_registry=resolve(raw.get("source_registry")),
            store_dir=resolve(raw.get("store_dir")),
            gate=raw.get("gate", {}),
            staleness_window_hours=float(raw.get("staleness_window_hours", 24.0)),
            diary_horizon_days=float(raw.get("diary_horizon_days", 7.0)),
            token=str(raw.get("token", "")),
            port=int(raw.get("port", 8000)),
            contacts=dict(raw.get("contacts", {})),
        )
        if os.environ.get(ENV_PORT):
            config.port = int(os.environ[ENV_PORT])
        if os.environ.get(ENV_TOKEN):
            config.token = os.environ[ENV_TOKEN]
        return config


def load_region_records(path: Path) -> list[dict]:
    raw = yaml.safe_load(Path(path).read_text()) or []
    if isinstance(raw, dict):
        raw = raw.get("regions", [])
    return list(raw)


def load_source_records(path: Path) -> list[SourceDescriptor]:
    raw = yaml.safe_load(Path(path).read_text()) or []
    if isinstance(raw, dict):
        raw = raw.get("sources", [])
    descriptors = []
    base = Path(path).parent
    for record in raw:
        record = dict(record)
        endpoint = record.get("endpoint", "")
        if endpoint and not endpoint.startswith(("http://", "https://")):
            candidate = Path(endpoint)
            if not candidate.is_absolute():
                record["endpoint"] = str(base / candidate)
        descriptors.append(SourceDescriptor.from_dict(record))
    return descriptors


class AppState:
    """Everything one process needs, wired together."""

    def __init__(
        self,
        regions: RegionRegistry,
        sources: list[SourceDescriptor],
        config: AppConfig,
        fetcher: Fetcher | None = None,
    ) -> None:
        from datetime import timedelta

        self.config = config
        self.regions = regions
        self.store = SeriesStore(regions)
        journal_path = (
            config.store_dir / JOURNAL_FILE if config.store_dir is not None else None
        )
        if config.store_dir is not None:
            config.store_dir.mkdir(parents=True, exist_ok=True)
        self.journal = Journal(journal_path)
        self.gate = QualityGate(
            self.store,
            regions,
            config=GateConfig.from_dict(config.gate),
            journal=self.journal,
        )
        self.pipeline = IngestPipeline(
            regions, self.store, self.gate, sources, fetcher=fetcher
        )
        self.reconciler = Reconciler(
            regions,
            self.store,
            self.gate,
            config=ReconcilerConfig(
                staleness_window=timedelta(hours=config.staleness_window_hours),
                diary_horizon=timedelta(days=config.diary_horizon_days),
            ),
        )
        self.desk = IssueDesk(regions)

    @classmethod
    def from_config(cls, config: AppConfig, fetcher: Fetcher | None = None) -> "AppState":
        regions = RegionRegistry.from_records(load_region_records(config.region_registry))
        sources = (
            load_source_records(config.source_registry)
            if config.source_registry is not None
            else []
        )
        state = cls(regions, sources, config, fetcher=fetcher)
        state.restore()
        return state

    # -- persistence ---------------------------------------------------------------

    @property
    def state_path(self) -> Path | None:
        if self.config.store_dir is None:
            return None
        return self.config.store_dir / STATE_FILE

    def save(self) -> None:
        path = self.state_path
        if path is None:
            return
        snapshot = {
            "store": self.store.to_state(),
            "gate": self.gate.to_state(),
            "pipeline": self.pipeline.to_state(),
            "reconciler": self.reconciler.to_state(),
            "issues": self.desk.to_state(),
        }
        blob = json.dumps(snapshot, sort_keys=True, separators=(",", ":"))
        tmp = path.with_suffix(".tmp")
        tmp.write_text(blob)
        tmp.replace(path)

    def restore(self) -> None:
        path = self.state_path
        if path is None or not path.exists():
            return
        snapshot = json.loads(path.read_text())
        self.store.load_state(snapshot.get("store", {}))
        self.gate.load_state(snapshot.get("gate", {}))
        self.pipeline.load_state(snapshot.get("pipeline", {}))
        self.reconciler.load_state(snapshot.get("reconciler", {}))
        self.desk.load_state(snapshot.get("issues", {}))

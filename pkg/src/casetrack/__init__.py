"""casetrack: federated epidemic case-count ingestion and quality control."""

from .gate import GateConfig, QualityGate, deployment_check, detect_jump
from .ingest import IngestPipeline
from .issues import IssueDesk
from .reconcile import Reconciler
from .regions import Level, Region, RegionRegistry
from .runtime import AppConfig, AppState
from .series import CaseRecord, Metric, monotonic_repair
from .sources import SourceDescriptor, parse_payload
from .store import SeriesStore

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "AppState",
    "CaseRecord",
    "GateConfig",
    "IngestPipeline",
    "IssueDesk",
    "Level",
    "Metric",
    "QualityGate",
    "Reconciler",
    "Region",
    "RegionRegistry",
    "SeriesStore",
    "SourceDescriptor",
    "deployment_check",
    "detect_jump",
    "monotonic_repair",
    "parse_payload",
]

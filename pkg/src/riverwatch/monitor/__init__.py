"""Continuous monitoring: registry, ingestion, alerting, HTTP API."""

from .service import (
    AOI,
    Alert,
    DuplicateIdError,
    IngestError,
    MonitorError,
    MonitorService,
    Observation,
    UnknownIdError,
    evaluate_change,
)
from .store import JsonlStore

__all__ = [
    "AOI",
    "Alert",
    "DuplicateIdError",
    "IngestError",
    "JsonlStore",
    "MonitorError",
    "MonitorService",
    "Observation",
    "UnknownIdError",
    "evaluate_change",
]

"""Alert-triage HTTP service: rules-first coverage, forest-ranked priority."""

from .app import create_app
from .store import (
    Alert,
    AlreadyClosed,
    Disposition,
    DuplicateSessionId,
    ThresholdChange,
    TriageStore,
    VersionConflict,
)

__all__ = [
    "create_app",
    "TriageStore",
    "Alert",
    "Disposition",
    "ThresholdChange",
    "DuplicateSessionId",
    "AlreadyClosed",
    "VersionConflict",
]

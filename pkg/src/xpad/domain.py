"""Core data model: audit sessions and the contextual features derived from them.

Sessions are immutable records of one user-patient access. Feature derivation
is a pure function of a session plus that user-patient pair's earlier sessions,
so recomputing features from the same inputs always gives the same answer.
All times are UTC; hour-of-day and day-of-week are computed on the UTC clock.
"""

from __future__ import annotations

import enum
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

__all__ = [
    "Role",
    "EventType",
    "ShiftType",
    "AuditSession",
    "FeatureVector",
    "ModelFeatureSet",
    "DEFAULT_FEATURES",
    "InvalidHistory",
    "InvalidTimestamp",
    "DuplicateSession",
    "derive_features",
    "batch_derive",
    "feature_matrix",
]

SECONDS_PER_DAY = 86_400
WEEK_SECONDS = 7 * SECONDS_PER_DAY

# Supported epoch range for event timestamps (inclusive).
MIN_TIMESTAMP = datetime(1970, 1, 1, tzinfo=timezone.utc)
MAX_TIMESTAMP = datetime(2100, 1, 1, tzinfo=timezone.utc)


class InvalidHistory(ValueError):
    """History passed to derive_features is unsorted or not strictly prior."""


class InvalidTimestamp(ValueError):
    """A timestamp falls outside the supported epoch range or is naive."""


class DuplicateSession(ValueError):
    """Two sessions in one batch share a session_id."""


class Role(str, enum.Enum):
    PHYSICIAN = "Physician"
    NURSE = "Nurse"
    ADMIN = "Admin"


class EventType(str, enum.Enum):
    VIEW = "View"
    MODIFY = "Modify"
    DISCHARGE = "Discharge"


class ShiftType(str, enum.Enum):
    DAY = "Day"
    EVENING = "Evening"
    NIGHT = "Night"


@dataclass(frozen=True)
class AuditSession:
    """One user-patient access session as recorded in the audit log."""

    session_id: str
    user_id: str
    role: Role
    provider_id: str
    patient_id: str
    primary_provider_id: str
    event_type: EventType
    event_timestamp: datetime
    session_duration_sec: int
    discharge_timestamp: datetime | None = None
    referral_documented: bool = False
    department: str | None = None
    shift_type: ShiftType | None = None
    multi_patient_session: bool | None = None
    is_anomaly: bool = False
    anomaly_template: str | None = None

    def __post_init__(self):
        if self.session_duration_sec < 0:
            raise ValueError(f"session_duration_sec must be >= 0, got {self.session_duration_sec}")
        if (self.anomaly_template is not None) != self.is_anomaly:
            raise ValueError("anomaly_template must be present iff is_anomaly is true")
        _check_timestamp(self.event_timestamp)
        if self.discharge_timestamp is not None:
            _check_timestamp(self.discharge_timestamp)
            limit = (self.discharge_timestamp - self.event_timestamp).total_seconds()
            if limit > 365 * SECONDS_PER_DAY:
                raise ValueError("discharge_timestamp more than 365 days after event_timestamp")


def _check_timestamp(ts: datetime) -> None:
    if ts.tzinfo is None or ts.utcoffset() is None:
        raise InvalidTimestamp(f"timestamp {ts!r} must be timezone-aware UTC")
    if not (MIN_TIMESTAMP <= ts <= MAX_TIMESTAMP):
        raise InvalidTimestamp(f"timestamp {ts} outside supported range")


@dataclass(frozen=True)
class FeatureVector:
    """Contextual features for one session.

    days_since_discharge is signed: negative means the access happened before
    the recorded discharge (in-stay access). Sessions with no discharge on
    record carry the 0.0 sentinel with has_discharge False; rule evaluation
    treats that case as non-suspicious rather than as a day-zero discharge.
    """

    provider_mismatch: int
    hour_of_day: int
    days_since_discharge: float
    session_duration_sec: float
    access_count_past_week: int
    access_count_24h: int
    day_of_week: int
    has_discharge: bool = True

    def __post_init__(self):
        if self.access_count_24h > self.access_count_past_week:
            raise ValueError("access_count_24h cannot exceed access_count_past_week")
        if not 0 <= self.hour_of_day <= 23:
            raise ValueError(f"hour_of_day out of range: {self.hour_of_day}")
        if not 0 <= self.day_of_week <= 6:
            raise ValueError(f"day_of_week out of range: {self.day_of_week}")

    def value(self, name: str) -> float:
        try:
            return float(getattr(self, name))
        except AttributeError:
            raise KeyError(name) from None


@dataclass(frozen=True)
class ModelFeatureSet:
    """Ordered feature names fed to the anomaly model."""

    names: tuple[str, ...] = (
        "provider_mismatch",
        "hour_of_day",
        "access_count_past_week",
        "session_duration_sec",
        "days_since_discharge",
    )

    def __post_init__(self):
        if not self.names:
            raise ValueError("feature set cannot be empty")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        fields = FeatureVector.__dataclass_fields__
        for name in self.names:
            if name not in fields:
                raise KeyError(f"unknown feature name: {name}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


DEFAULT_FEATURES = ModelFeatureSet()


def derive_features(session: AuditSession, history: Sequence[AuditSession]) -> FeatureVector:
    """Derive the feature vector for one session from its prior same-pair history.

    history must hold only sessions for the same user-patient pair, sorted by
    event_timestamp ascending and all strictly before session.event_timestamp.
    """
    t = session.event_timestamp
    prev = None
    for h in history:
        if h.event_timestamp >= t:
            raise InvalidHistory(
                f"history session {h.session_id} is not strictly before {session.session_id}"
            )
        if prev is not None and h.event_timestamp < prev:
            raise InvalidHistory("history is not sorted by event_timestamp ascending")
        prev = h.event_timestamp

    times = [h.event_timestamp for h in history]
    return _features_from_times(session, times)


def _features_from_times(session: AuditSession, times: Sequence[datetime]) -> FeatureVector:
    """Compute features given the sorted prior timestamps of the same pair.

    Window counts include events at exactly the window boundary: a prior event
    at t - 24h counts toward access_count_24h.
    """
    t = session.event_timestamp
    n = len(times)
    # times is sorted ascending; events in [t - window, t) count.
    count_24h = n - bisect_left(times, _shift(t, -SECONDS_PER_DAY))
    count_week = n - bisect_left(times, _shift(t, -WEEK_SECONDS))

    if session.discharge_timestamp is not None:
        days = (t - session.discharge_timestamp).total_seconds() / SECONDS_PER_DAY
        has_discharge = True
    else:
        days = 0.0
        has_discharge = False

    return FeatureVector(
        provider_mismatch=int(session.provider_id != session.primary_provider_id),
        hour_of_day=t.hour,
        days_since_discharge=days,
        session_duration_sec=float(session.session_duration_sec),
        access_count_past_week=count_week,
        access_count_24h=count_24h,
        day_of_week=t.weekday(),
        has_discharge=has_discharge,
    )


def _shift(t: datetime, seconds: int) -> datetime:
    from datetime import timedelta

    return t + timedelta(seconds=seconds)


def features_from_prior_times(
    session: AuditSession, prior_times: Sequence[datetime]
) -> FeatureVector:
    """Features for a session given only its pair's earlier timestamps, sorted.

    Streaming ingestion keeps one sorted timestamp list per user-patient pair;
    this avoids retaining whole session objects as history.
    """
    for t in prior_times:
        if t >= session.event_timestamp:
            raise InvalidHistory("prior_times must be strictly before the session")
    return _features_from_times(session, prior_times)


def batch_derive(sessions: Iterable[AuditSession]) -> list[tuple[AuditSession, FeatureVector]]:
    """Derive features for a whole batch; output order equals input order.

    Sessions are grouped by (user_id, patient_id) and each group is sorted by
    timestamp, so every session sees exactly its pair's strictly-earlier events.
    """
    sessions = list(sessions)
    seen: set[str] = set()
    for s in sessions:
        if s.session_id in seen:
            raise DuplicateSession(f"duplicate session_id: {s.session_id}")
        seen.add(s.session_id)

    by_pair: dict[tuple[str, str], list[int]] = {}
    for i, s in enumerate(sessions):
        by_pair.setdefault((s.user_id, s.patient_id), []).append(i)

    out: list[tuple[AuditSession, FeatureVector] | None] = [None] * len(sessions)
    for indices in by_pair.values():
        group = sorted(indices, key=lambda i: sessions[i].event_timestamp)
        times = [sessions[i].event_timestamp for i in group]
        for rank, i in enumerate(group):
            s = sessions[i]
            # strictly-earlier events only: back up over ties on the timestamp
            prior_end = bisect_left(times, s.event_timestamp, 0, rank)
            out[i] = (s, _features_from_times(s, times[:prior_end]))
    return out  # type: ignore[return-value]


def feature_matrix(
    features: Sequence[FeatureVector], feature_set: ModelFeatureSet = DEFAULT_FEATURES
):
    """Stack feature vectors into a float matrix over the given feature set."""
    import numpy as np

    return np.array(
        [[fv.value(name) for name in feature_set.names] for fv in features], dtype=np.float64
    )

"""Triage state over an append-only event log with periodic snapshots.

Every state change is one JSON line in events.jsonl; a snapshot of the full
state is written every N events so startup replays only the tail. Replaying
the log reconstructs alert, disposition, and threshold state exactly: events
carry materialized records (including scores and explanations computed at
ingest time), so recovery never depends on which model happens to be loadable
later. Dispositions only ever append; corrections are new records.

All mutations run under one writer lock, applied in arrival order. Reads take
the same lock briefly and work on copies.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import explain as explain_mod
from .. import iforest as iforest_mod
from ..domain import (
    DEFAULT_FEATURES,
    AuditSession,
    EventType,
    FeatureVector,
    ModelFeatureSet,
    Role,
    ShiftType,
    features_from_prior_times,
)
from ..rules import RuleThresholds, RuleVerdict, classify

__all__ = [
    "Alert",
    "Disposition",
    "ThresholdChange",
    "TriageStore",
    "DuplicateSessionId",
    "AlreadyClosed",
    "VersionConflict",
    "NoBackground",
    "NoModel",
]

SNAPSHOT_EVERY = 200

TERMINAL_OUTCOMES = {"ConfirmedMisuse", "Benign"}
OUTCOMES = TERMINAL_OUTCOMES | {"NeedsInfo"}


class DuplicateSessionId(ValueError):
    """A session id was already ingested (or repeats within the batch)."""


class AlreadyClosed(ValueError):
    """The alert already has a terminal disposition."""


class VersionConflict(ValueError):
    """Optimistic concurrency check failed on the threshold version."""


class NoModel(RuntimeError):
    """No scoring model is loaded."""


class NoBackground(RuntimeError):
    """No ingested sessions to explain against."""


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_ts(s: str) -> datetime:
    return datetime.fromisoformat(s.replace("Z", "+00:00"))


def session_to_json(s: AuditSession) -> dict:
    return {
        "session_id": s.session_id,
        "user_id": s.user_id,
        "role": s.role.value,
        "provider_id": s.provider_id,
        "patient_id": s.patient_id,
        "primary_provider_id": s.primary_provider_id,
        "event_type": s.event_type.value,
        "event_timestamp": _iso(s.event_timestamp),
        "session_duration_sec": s.session_duration_sec,
        "discharge_timestamp": _iso(s.discharge_timestamp) if s.discharge_timestamp else None,
        "referral_documented": s.referral_documented,
        "department": s.department,
        "shift_type": s.shift_type.value if s.shift_type else None,
        "multi_patient_session": s.multi_patient_session,
    }


def session_from_json(d: dict) -> AuditSession:
    return AuditSession(
        session_id=d["session_id"],
        user_id=d["user_id"],
        role=Role(d["role"]),
        provider_id=d["provider_id"],
        patient_id=d["patient_id"],
        primary_provider_id=d["primary_provider_id"],
        event_type=EventType(d["event_type"]),
        event_timestamp=_parse_ts(d["event_timestamp"]),
        session_duration_sec=int(d["session_duration_sec"]),
        discharge_timestamp=_parse_ts(d["discharge_timestamp"]) if d.get("discharge_timestamp") else None,
        referral_documented=bool(d.get("referral_documented", False)),
        department=d.get("department"),
        shift_type=ShiftType(d["shift_type"]) if d.get("shift_type") else None,
        multi_patient_session=d.get("multi_patient_session"),
    )


@dataclass(frozen=True)
class Disposition:
    alert_id: str
    outcome: str
    rationale: str
    reviewer_id: str
    decided_at: datetime

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "outcome": self.outcome,
            "rationale": self.rationale,
            "reviewer_id": self.reviewer_id,
            "decided_at": _iso(self.decided_at),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Disposition":
        return cls(
            alert_id=d["alert_id"],
            outcome=d["outcome"],
            rationale=d["rationale"],
            reviewer_id=d["reviewer_id"],
            decided_at=_parse_ts(d["decided_at"]),
        )


@dataclass(frozen=True)
class ThresholdChange:
    prior: RuleThresholds
    next: RuleThresholds
    reason: str
    approved_by: str
    applied_at: datetime

    def to_json(self) -> dict:
        return {
            "prior": self.prior.to_json(),
            "next": self.next.to_json(),
            "reason": self.reason,
            "approved_by": self.approved_by,
            "applied_at": _iso(self.applied_at),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ThresholdChange":
        return cls(
            prior=RuleThresholds.from_json(d["prior"]),
            next=RuleThresholds.from_json(d["next"]),
            reason=d["reason"],
            approved_by=d["approved_by"],
            applied_at=_parse_ts(d["applied_at"]),
        )


@dataclass
class Alert:
    alert_id: str
    session: dict
    features: dict
    rule_verdict: dict
    if_score: dict | None
    explanation: dict | None
    priority: float
    status: str
    created_at: datetime
    threshold_version: int

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "session": self.session,
            "features": self.features,
            "rule_verdict": self.rule_verdict,
            "if_score": self.if_score,
            "explanation": self.explanation,
            "priority": self.priority,
            "status": self.status,
            "created_at": _iso(self.created_at),
            "threshold_version": self.threshold_version,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Alert":
        return cls(
            alert_id=d["alert_id"],
            session=d["session"],
            features=d["features"],
            rule_verdict=d["rule_verdict"],
            if_score=d.get("if_score"),
            explanation=d.get("explanation"),
            priority=float(d["priority"]),
            status=d["status"],
            created_at=_parse_ts(d["created_at"]),
            threshold_version=int(d["threshold_version"]),
        )

    def summary(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "session_id": self.session["session_id"],
            "priority": self.priority,
            "reasons": sorted(self.rule_verdict.get("reasons", [])),
            "if_flagged": bool(self.if_score and self.if_score.get("flagged")),
            "status": self.status,
            "created_at": _iso(self.created_at),
        }


def _features_to_json(fv: FeatureVector) -> dict:
    return {
        "provider_mismatch": fv.provider_mismatch,
        "hour_of_day": fv.hour_of_day,
        "days_since_discharge": fv.days_since_discharge,
        "session_duration_sec": fv.session_duration_sec,
        "access_count_past_week": fv.access_count_past_week,
        "access_count_24h": fv.access_count_24h,
        "day_of_week": fv.day_of_week,
        "has_discharge": fv.has_discharge,
    }


class TriageStore:
    """In-memory triage state, recovered from and persisted to the event log."""

    def __init__(
        self,
        data_dir: str | Path,
        feature_set: ModelFeatureSet = DEFAULT_FEATURES,
        now_fn: Callable[[], datetime] | None = None,
        snapshot_every: int = SNAPSHOT_EVERY,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "models").mkdir(exist_ok=True)
        self.events_path = self.data_dir / "events.jsonl"
        self.snapshot_path = self.data_dir / "snapshot.json"
        self.feature_set = feature_set
        self.now_fn = now_fn or (lambda: datetime.now(timezone.utc))
        self.snapshot_every = snapshot_every
        self.lock = threading.RLock()

        # state
        self.seq = 0
        self.alerts: dict[str, Alert] = {}
        self.dispositions: dict[str, list[Disposition]] = {}
        self.threshold_history: list[ThresholdChange] = []
        self.thresholds = RuleThresholds()
        self.sessions_seen: set[str] = set()
        self.pair_times: dict[tuple[str, str], list[datetime]] = {}
        self.feature_rows: list[list[float]] = []
        self.n_sessions = 0
        self.alert_counter = 0
        self.model: iforest_mod.IsolationForestModel | None = None
        self.model_meta: dict | None = None
        self.deployments: list[dict] = []

        self._recover()

    # -- persistence ---------------------------------------------------------

    def _recover(self) -> None:
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text())
            self._load_state(snap)
        if self.events_path.exists():
            with open(self.events_path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    if event["seq"] <= self.seq:
                        continue
                    self._apply(event)
                    self.seq = event["seq"]
        if self.model_meta and self.model is None:
            self._load_model_file(self.model_meta["model_digest"])

    def _load_state(self, snap: dict) -> None:
        self.seq = snap["seq"]
        self.alerts = {k: Alert.from_json(v) for k, v in snap["alerts"].items()}
        self.dispositions = {
            k: [Disposition.from_json(d) for d in v] for k, v in snap["dispositions"].items()
        }
        self.threshold_history = [ThresholdChange.from_json(c) for c in snap["threshold_history"]]
        self.thresholds = RuleThresholds.from_json(snap["thresholds"])
        self.sessions_seen = set(snap["sessions_seen"])
        self.pair_times = {
            tuple(k.split("\x1f")): [_parse_ts(t) for t in v] for k, v in snap["pair_times"].items()
        }
        self.feature_rows = snap["feature_rows"]
        self.n_sessions = snap["n_sessions"]
        self.alert_counter = snap["alert_counter"]
        self.model_meta = snap.get("model_meta")
        self.deployments = snap.get("deployments", [])

    def _state_json(self) -> dict:
        return {
            "seq": self.seq,
            "alerts": {k: v.to_json() for k, v in self.alerts.items()},
            "dispositions": {k: [d.to_json() for d in v] for k, v in self.dispositions.items()},
            "threshold_history": [c.to_json() for c in self.threshold_history],
            "thresholds": self.thresholds.to_json(),
            "sessions_seen": sorted(self.sessions_seen),
            "pair_times": {"\x1f".join(k): [_iso(t) for t in v] for k, v in self.pair_times.items()},
            "feature_rows": self.feature_rows,
            "n_sessions": self.n_sessions,
            "alert_counter": self.alert_counter,
            "model_meta": self.model_meta,
            "deployments": self.deployments,
        }

    def _append_event(self, event: dict) -> None:
        self.seq += 1
        event["seq"] = self.seq
        with open(self.events_path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
        if self.seq % self.snapshot_every == 0:
            tmp = self.snapshot_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(self._state_json(), sort_keys=True))
            tmp.replace(self.snapshot_path)

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "sessions_ingested":
            for sd in event["sessions"]:
                self._index_session(sd)
            for ad in event["alerts"]:
                alert = Alert.from_json(ad)
                self.alerts[alert.alert_id] = alert
                self.alert_counter = max(self.alert_counter, int(alert.alert_id[1:]))
        elif kind == "disposition":
            d = Disposition.from_json(event["disposition"])
            self.dispositions.setdefault(d.alert_id, []).append(d)
            self.alerts[d.alert_id].status = event["alert_status"]
        elif kind == "threshold_change":
            change = ThresholdChange.from_json(event["change"])
            self.threshold_history.append(change)
            self.thresholds = change.next
        elif kind == "model_loaded":
            self.model_meta = event["metadata"]
            self.deployments.append(event["metadata"])
        else:
            raise ValueError(f"unknown event type in log: {kind!r}")

    def _index_session(self, sd: dict) -> None:
        self.sessions_seen.add(sd["session_id"])
        pair = (sd["user_id"], sd["patient_id"])
        bisect.insort(self.pair_times.setdefault(pair, []), _parse_ts(sd["event_timestamp"]))
        self.feature_rows.append(sd["_feature_row"])
        self.n_sessions += 1

    # -- ingest ----------------------------------------------------------------

    def ingest(self, sessions: Sequence[AuditSession]) -> tuple[int, int, bool]:
        """Atomically ingest a batch; returns (accepted, alerts_created, degraded)."""
        with self.lock:
            ids = [s.session_id for s in sessions]
            dup = set()
            for sid in ids:
                if sid in self.sessions_seen or ids.count(sid) > 1:
                    dup.add(sid)
            if dup:
                raise DuplicateSessionId(", ".join(sorted(dup)))

            degraded = self.model is None
            ordered = sorted(range(len(sessions)), key=lambda i: sessions[i].event_timestamp)
            session_docs: list[dict] = [None] * len(sessions)  # type: ignore[list-item]
            new_alerts: list[Alert] = []
            batch_times: dict[tuple[str, str], list[datetime]] = {}

            for i in ordered:
                s = sessions[i]
                pair = (s.user_id, s.patient_id)
                prior = list(self.pair_times.get(pair, ())) + batch_times.get(pair, [])
                prior = sorted(t for t in prior if t < s.event_timestamp)
                fv = features_from_prior_times(s, prior)
                verdict = classify(s, fv, self.thresholds)
                report = None
                explanation = None
                if self.model is not None:
                    report = iforest_mod.score(self.model, fv)
                    background = (
                        np.asarray(self.feature_rows[-2000:], dtype=np.float64)
                        if self.feature_rows
                        else self.model.means.reshape(1, -1)
                    )
                    explanation = explain_mod.explain_instance(self.model, fv, background)
                alert = self._build_alert(s, fv, verdict, report, explanation)
                if alert is not None:
                    new_alerts.append(alert)
                doc = session_to_json(s)
                doc["_feature_row"] = [fv.value(n) for n in self.feature_set.names]
                session_docs[i] = doc
                batch_times.setdefault(pair, []).append(s.event_timestamp)

            event = {
                "type": "sessions_ingested",
                "sessions": session_docs,
                "alerts": [a.to_json() for a in new_alerts],
            }
            for sd in session_docs:
                self._index_session(sd)
            for a in new_alerts:
                self.alerts[a.alert_id] = a
            self._append_event(event)
            return len(sessions), len(new_alerts), degraded

    def _build_alert(
        self,
        session: AuditSession,
        fv: FeatureVector,
        verdict: RuleVerdict,
        report: iforest_mod.ScoreReport | None,
        explanation: explain_mod.Explanation | None,
    ) -> Alert | None:
        if_flagged = bool(report and report.flagged)
        if not verdict.flagged and not if_flagged:
            return None
        self.alert_counter += 1
        return Alert(
            alert_id=f"A{self.alert_counter:06d}",
            session=session_to_json(session),
            features=_features_to_json(fv),
            rule_verdict={"flagged": verdict.flagged, "reasons": sorted(verdict.reasons)},
            if_score=(
                {
                    "score": report.score,
                    "mean_path_length": report.mean_path_length,
                    "flagged": report.flagged,
                }
                if report
                else None
            ),
            explanation=(
                {
                    "feature_phis": explanation.feature_phis,
                    "base_value": explanation.base_value,
                    "model_output": explanation.model_output,
                    "feature_values": explanation.feature_values,
                    "target": explanation.target,
                }
                if explanation
                else None
            ),
            priority=report.score if report else 0.0,
            status="Open",
            created_at=self.now_fn(),
            threshold_version=self.thresholds.version,
        )

    # -- queries -----------------------------------------------------------------

    def list_alerts(
        self,
        status: str | None = None,
        min_score: float | None = None,
        limit: int = 50,
        offset: int = 0,
    ) -> tuple[list[dict], int]:
        with self.lock:
            rows = list(self.alerts.values())
        if status is not None:
            rows = [a for a in rows if a.status == status]
        if min_score is not None:
            rows = [a for a in rows if a.priority >= min_score]
        rows.sort(key=lambda a: (-a.priority, a.created_at, a.alert_id))
        total = len(rows)
        return [a.summary() for a in rows[offset : offset + limit]], total

    def get_alert(self, alert_id: str) -> Alert | None:
        with self.lock:
            return self.alerts.get(alert_id)

    def alert_dispositions(self, alert_id: str) -> list[Disposition]:
        with self.lock:
            return list(self.dispositions.get(alert_id, ()))

    # -- mutations ----------------------------------------------------------------

    def add_disposition(self, alert_id: str, outcome: str, rationale: str, reviewer_id: str) -> Disposition:
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome: {outcome!r}")
        if not rationale.strip():
            raise ValueError("rationale must be non-empty")
        with self.lock:
            alert = self.alerts.get(alert_id)
            if alert is None:
                raise KeyError(alert_id)
            existing = self.dispositions.get(alert_id, ())
            if any(d.outcome in TERMINAL_OUTCOMES for d in existing):
                raise AlreadyClosed(alert_id)
            disposition = Disposition(
                alert_id=alert_id,
                outcome=outcome,
                rationale=rationale,
                reviewer_id=reviewer_id,
                decided_at=self.now_fn(),
            )
            new_status = "Closed" if outcome in TERMINAL_OUTCOMES else "InReview"
            self.dispositions.setdefault(alert_id, []).append(disposition)
            alert.status = new_status
            self._append_event(
                {"type": "disposition", "disposition": disposition.to_json(), "alert_status": new_status}
            )
            return disposition

    def change_thresholds(
        self, next_thresholds: RuleThresholds, reason: str, approved_by: str, prior_version: int
    ) -> ThresholdChange:
        if not reason.strip():
            raise ValueError("reason must be non-empty")
        if not approved_by.strip():
            raise ValueError("approved_by must be non-empty")
        with self.lock:
            if prior_version != self.thresholds.version:
                raise VersionConflict(
                    f"prior_version {prior_version} does not match current {self.thresholds.version}"
                )
            from dataclasses import replace as dc_replace

            applied = dc_replace(
                next_thresholds,
                version=self.thresholds.version + 1,
                changed_by=approved_by,
                change_reason=reason,
            )
            change = ThresholdChange(
                prior=self.thresholds,
                next=applied,
                reason=reason,
                approved_by=approved_by,
                applied_at=self.now_fn(),
            )
            self.threshold_history.append(change)
            self.thresholds = applied
            self._append_event({"type": "threshold_change", "change": change.to_json()})
            return change

    def load_model(self, document: str | dict) -> dict:
        model = iforest_mod.deserialize(document)
        if model.feature_set.names != self.feature_set.names:
            raise iforest_mod.FeatureMismatch(
                f"model features {model.feature_set.names} != configured {self.feature_set.names}"
            )
        doc = iforest_mod.serialize(model)
        digest = hashlib.sha256(doc.encode()).hexdigest()
        with self.lock:
            (self.data_dir / "models" / f"{digest}.json").write_text(doc)
            meta = {
                "model_digest": digest,
                "feature_names": list(model.feature_set.names),
                "n_trees": len(model.trees),
                "psi": model.psi,
                "contamination": model.contamination,
                "score_threshold": model.score_threshold,
                "master_seed": model.master_seed,
                "loaded_at": _iso(self.now_fn()),
            }
            self.model = model
            self.model_meta = meta
            self.deployments.append(meta)
            self._append_event({"type": "model_loaded", "metadata": meta})
            return meta

    def _load_model_file(self, digest: str) -> None:
        path = self.data_dir / "models" / f"{digest}.json"
        if path.exists():
            try:
                self.model = iforest_mod.deserialize(path.read_text())
            except (iforest_mod.MalformedModel, iforest_mod.UnsupportedModelVersion):
                self.model = None

    # -- analytics ------------------------------------------------------------------

    def global_importance(self) -> list[tuple[str, float]]:
        with self.lock:
            if self.model is None:
                raise NoModel("no model loaded")
            if not self.feature_rows:
                raise NoBackground("no ingested sessions to explain against")
            X = np.asarray(self.feature_rows[-2000:], dtype=np.float64)
            model = self.model
        gi = explain_mod.global_importance(model, X)
        return list(gi.ranking)

    def dashboard(self) -> dict:
        with self.lock:
            alerts = list(self.alerts.values())
            dispositions = {k: list(v) for k, v in self.dispositions.items()}
            rows = np.asarray(self.feature_rows, dtype=np.float64) if self.feature_rows else None

        total = len(alerts)
        open_count = sum(1 for a in alerts if a.status == "Open")
        dispositioned = [a for a in alerts if dispositions.get(a.alert_id)]
        confirmed = sum(
            1
            for a in dispositioned
            if dispositions[a.alert_id][-1].outcome == "ConfirmedMisuse"
        )
        flags = []
        coverage = len(dispositioned) / total if total else 0.0
        if total == 0:
            flags.append("no_alerts")
        proxy = confirmed / len(dispositioned) if dispositioned else 0.0
        if not dispositioned:
            flags.append("no_dispositions")

        triage_seconds = sorted(
            (dispositions[a.alert_id][0].decided_at - a.created_at).total_seconds()
            for a in dispositioned
        )
        median_triage = float(np.median(triage_seconds)) if triage_seconds else 0.0
        if not triage_seconds:
            flags.append("no_triage_times")

        return {
            "alert_volume": total,
            "open_count": open_count,
            "precision_proxy": proxy,
            "median_time_to_triage_seconds": median_triage,
            "disposition_coverage": coverage,
            "ingested_sessions": self.n_sessions,
            "drift": self._drift(rows),
            "flags": flags,
        }

    def _drift(self, rows: np.ndarray | None) -> dict:
        """Population-stability index per feature: first half vs latest half."""
        if rows is None or len(rows) < 100:
            return {"available": False, "psi": {}}
        half = len(rows) // 2
        base, recent = rows[:half], rows[half:]
        psi = {}
        for j, name in enumerate(self.feature_set.names):
            psi[name] = _psi(base[:, j], recent[:, j])
        return {"available": True, "psi": psi}


def _psi(baseline: np.ndarray, recent: np.ndarray, bins: int = 10) -> float:
    qs = np.quantile(baseline, np.linspace(0, 1, bins + 1))
    qs[0], qs[-1] = -np.inf, np.inf
    edges = np.unique(qs)
    if len(edges) < 3:
        return 0.0
    b_counts, _ = np.histogram(baseline, bins=edges)
    r_counts, _ = np.histogram(recent, bins=edges)
    b = np.clip(b_counts / max(b_counts.sum(), 1), 1e-6, None)
    r = np.clip(r_counts / max(r_counts.sum(), 1), 1e-6, None)
    return float(np.sum((r - b) * np.log(r / b)))

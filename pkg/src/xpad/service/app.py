"""HTTP surface of the triage service.

Rules guarantee coverage: every rule-flagged ingest becomes an alert whether
or not a model is loaded. The forest supplies the queue's priority order and
per-case explanations. Threshold changes go through optimistic, versioned
change control and apply to subsequent ingests only.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .. import explain as explain_mod
from .. import iforest as iforest_mod
from .. import readiness as readiness_mod
from ..domain import DEFAULT_FEATURES, InvalidTimestamp, ModelFeatureSet
from ..rules import RuleThresholds
from .store import (
    AlreadyClosed,
    DuplicateSessionId,
    NoBackground,
    NoModel,
    TriageStore,
    VersionConflict,
    session_from_json,
)

logger = logging.getLogger("xpad.service")


class SessionIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    session_id: str
    user_id: str
    role: Literal["Physician", "Nurse", "Admin"]
    provider_id: str
    patient_id: str
    primary_provider_id: str
    event_type: Literal["View", "Modify", "Discharge"]
    event_timestamp: str
    session_duration_sec: int = Field(ge=0)
    discharge_timestamp: str | None = None
    referral_documented: bool = False
    department: str | None = None
    shift_type: Literal["Day", "Evening", "Night"] | None = None
    multi_patient_session: bool | None = None


class DispositionIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    outcome: Literal["ConfirmedMisuse", "Benign", "NeedsInfo"]
    rationale: str
    reviewer_id: str


class ThresholdsIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    post_discharge_days_max: float
    off_hours_start: int
    off_hours_end: int
    day_shift_roles: list[Literal["Physician", "Nurse", "Admin"]]
    duration_min_sec: float
    duration_max_sec: float
    repeat_count_min: int


class ThresholdChangeIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    thresholds: ThresholdsIn
    reason: str
    approved_by: str
    prior_version: int


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, **extra})


def create_app(
    data_dir: str | Path,
    model_path: str | Path | None = None,
    feature_set: ModelFeatureSet = DEFAULT_FEATURES,
    store: TriageStore | None = None,
) -> FastAPI:
    app = FastAPI(title="xpad triage service", docs_url=None, redoc_url=None)
    st = store if store is not None else TriageStore(data_dir, feature_set=feature_set)
    app.state.store = st

    if model_path is not None and st.model is None:
        st.load_model(Path(model_path).read_text())

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        start = time.monotonic()
        response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": round((time.monotonic() - start) * 1000, 2),
                }
            )
        )
        return response

    # -- ingest ---------------------------------------------------------------

    @app.post("/sessions")
    async def post_sessions(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            return _error(400, "body must be a JSON array of sessions")
        if not isinstance(payload, list):
            return _error(400, "body must be a JSON array of sessions")
        sessions = []
        for i, raw in enumerate(payload):
            try:
                model = SessionIn.model_validate(raw)
            except ValidationError as exc:
                first = exc.errors()[0]
                field = ".".join(str(p) for p in first["loc"]) or "(root)"
                return _error(400, f"session {i}: {first['msg']}", field=field, index=i)
            try:
                sessions.append(session_from_json(model.model_dump()))
            except (ValueError, InvalidTimestamp) as exc:
                return _error(400, f"session {i}: {exc}", field="event_timestamp", index=i)
        try:
            accepted, alerts_created, degraded = st.ingest(sessions)
        except DuplicateSessionId as exc:
            return _error(409, f"duplicate session_id: {exc}")
        body = {"accepted": accepted, "alerts_created": alerts_created, "degraded": degraded}
        # no model: the batch is still processed under the rules, but the
        # response signals degraded service
        return JSONResponse(status_code=503 if degraded else 200, content=body)

    # -- alerts -----------------------------------------------------------------

    @app.get("/alerts")
    def get_alerts(
        status: Literal["Open", "InReview", "Closed"] | None = None,
        min_score: float | None = None,
        order: Literal["priority_desc"] = "priority_desc",
        limit: int = 50,
        offset: int = 0,
    ):
        rows, total = st.list_alerts(status=status, min_score=min_score, limit=limit, offset=offset)
        return {"alerts": rows, "total": total, "limit": limit, "offset": offset}

    @app.get("/alerts/{alert_id}")
    def get_alert(alert_id: str):
        alert = st.get_alert(alert_id)
        if alert is None:
            return _error(404, f"unknown alert: {alert_id}")
        doc = alert.to_json()
        doc["dispositions"] = [d.to_json() for d in st.alert_dispositions(alert_id)]
        doc["narrative"] = _narrative(alert)
        return doc

    def _narrative(alert) -> str | None:
        if not alert.explanation:
            return None
        expl = explain_mod.Explanation(
            feature_phis=alert.explanation["feature_phis"],
            base_value=alert.explanation["base_value"],
            model_output=alert.explanation["model_output"],
            feature_values=alert.explanation.get("feature_values", {}),
        )
        return explain_mod.narrate(expl, session_from_json(alert.session)).text

    @app.post("/alerts/{alert_id}/disposition")
    async def post_disposition(alert_id: str, request: Request):
        try:
            payload = await request.json()
            body = DispositionIn.model_validate(payload)
        except (json.JSONDecodeError, ValidationError) as exc:
            return _error(400, f"invalid disposition: {exc.errors()[0]['msg'] if isinstance(exc, ValidationError) else exc}")
        try:
            disposition = st.add_disposition(alert_id, body.outcome, body.rationale, body.reviewer_id)
        except KeyError:
            return _error(404, f"unknown alert: {alert_id}")
        except AlreadyClosed:
            return _error(409, f"alert {alert_id} already has a terminal disposition")
        except ValueError as exc:
            return _error(400, str(exc))
        alert = st.get_alert(alert_id)
        return {"disposition": disposition.to_json(), "alert_status": alert.status}

    # -- threshold change control --------------------------------------------------

    @app.get("/config/thresholds")
    def get_thresholds():
        t = st.thresholds
        return {"thresholds": t.to_json(), "version": t.version}

    @app.put("/config/thresholds")
    async def put_thresholds(request: Request):
        try:
            payload = await request.json()
            body = ThresholdChangeIn.model_validate(payload)
        except (json.JSONDecodeError, ValidationError) as exc:
            msg = exc.errors()[0]["msg"] if isinstance(exc, ValidationError) else str(exc)
            return _error(400, f"invalid threshold change: {msg}")
        try:
            next_thresholds = RuleThresholds.from_json(
                {**body.thresholds.model_dump(), "version": body.prior_version}
            )
        except ValueError as exc:
            return _error(400, f"invalid thresholds: {exc}")
        try:
            change = st.change_thresholds(next_thresholds, body.reason, body.approved_by, body.prior_version)
        except VersionConflict as exc:
            return _error(409, str(exc), current_version=st.thresholds.version)
        except ValueError as exc:
            return _error(400, str(exc))
        return {"change": change.to_json(), "version": change.next.version}

    @app.get("/config/changes")
    def get_changes():
        return {"changes": [c.to_json() for c in st.threshold_history]}

    # -- analytics ---------------------------------------------------------------

    @app.get("/metrics/dashboard")
    def dashboard():
        return st.dashboard()

    @app.get("/explain/global")
    def explain_global():
        try:
            ranking = st.global_importance()
        except NoModel:
            return _error(409, "no model loaded")
        except NoBackground:
            return _error(409, "no ingested sessions to explain against")
        return {"ranking": [{"feature": f, "mean_abs_phi": v} for f, v in ranking]}

    @app.get("/readiness/report")
    def readiness_report():
        entries_path = st.data_dir / "assessments.json"
        entries = []
        if entries_path.exists():
            raw = json.loads(entries_path.read_text())
            entries = [readiness_mod.AssessmentEntry.from_json(e) for e in raw]
        report = readiness_mod.assess(entries)
        return report.to_json()

    # -- model management -----------------------------------------------------------

    @app.post("/model/load")
    async def model_load(request: Request):
        try:
            document = await request.json()
        except json.JSONDecodeError:
            return _error(400, "model document must be JSON")
        try:
            meta = st.load_model(document)
        except iforest_mod.UnsupportedModelVersion as exc:
            return _error(400, str(exc))
        except iforest_mod.MalformedModel as exc:
            return _error(400, f"malformed model: {exc}")
        except iforest_mod.FeatureMismatch as exc:
            return _error(409, str(exc))
        return meta

    @app.get("/model/deployments")
    def deployments():
        return {"deployments": st.deployments}

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "model_loaded": st.model is not None,
            "threshold_version": st.thresholds.version,
        }

    return app

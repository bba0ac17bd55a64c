"""Record service responses as fixtures for the dashboard's contract tests.

Runs the real triage service in-process, drives a small scenario, and saves
the JSON payloads the UI consumes. Rerun after API changes:

    python3 frontend/scripts/record_fixtures.py
"""

import json
import sys
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from xpad import domain, evalkit, iforest, simgen
from xpad.service import create_app

OUT = Path(__file__).parent.parent / "fixtures"


def doc(session_id, **kw):
    base = {
        "session_id": session_id,
        "user_id": kw.pop("user_id", "U001"),
        "role": kw.pop("role", "Nurse"),
        "provider_id": kw.pop("provider_id", "P01"),
        "patient_id": kw.pop("patient_id", "PT0001"),
        "primary_provider_id": kw.pop("primary_provider_id", "P01"),
        "event_type": "View",
        "event_timestamp": kw.pop("event_timestamp", "2024-06-15T10:00:00Z"),
        "session_duration_sec": kw.pop("duration", 600),
        "discharge_timestamp": kw.pop("discharge_timestamp", "2024-06-14T10:00:00Z"),
        "referral_documented": kw.pop("referral_documented", False),
    }
    base.update(kw)
    return base


def main():
    ds = simgen.generate(simgen.GeneratorProfile.preset("refined", seed=42))
    derived = domain.batch_derive(ds.sessions)
    X = domain.feature_matrix([fv for _, fv in derived])
    tr = np.array(ds.train_index)
    model = iforest.fit(
        X[tr], contamination=evalkit.default_contamination(ds.profile), master_seed=42
    )

    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(tmp))
        r = client.post("/model/load", json=json.loads(iforest.serialize(model)))
        assert r.status_code == 200, r.text

        t = datetime(2024, 6, 20, 2, 15, tzinfo=timezone.utc)
        batch = [
            doc(f"H{i}", event_timestamp=(t - timedelta(hours=10 + i)).strftime("%Y-%m-%dT%H:%M:%SZ"),
                patient_id="PT0042")
            for i in range(3)
        ]
        batch += [
            doc("CASE-NIGHT", event_timestamp="2024-06-20T02:15:00Z", provider_id="P02",
                patient_id="PT0042", discharge_timestamp="2024-06-02T02:00:00Z"),
            doc("CASE-LONG", duration=26000, patient_id="PT0050"),
            doc("CASE-CROSS", provider_id="P03", patient_id="PT0061",
                event_timestamp="2024-06-16T11:00:00Z"),
            doc("OK-1", patient_id="PT0070", event_timestamp="2024-06-17T09:00:00Z"),
        ]
        r = client.post("/sessions", json=batch)
        assert r.status_code == 200, r.text

        alerts = client.get("/alerts").json()
        (OUT / "alerts_list.json").write_text(json.dumps(alerts, indent=2) + "\n")

        detail = client.get(f"/alerts/{alerts['alerts'][0]['alert_id']}").json()
        (OUT / "alert_detail.json").write_text(json.dumps(detail, indent=2) + "\n")

        (OUT / "explain_global.json").write_text(
            json.dumps(client.get("/explain/global").json(), indent=2) + "\n"
        )
        (OUT / "thresholds.json").write_text(
            json.dumps(client.get("/config/thresholds").json(), indent=2) + "\n"
        )

        change = {
            "thresholds": {
                "post_discharge_days_max": 10.0,
                "off_hours_start": 22,
                "off_hours_end": 6,
                "day_shift_roles": ["Admin"],
                "duration_min_sec": 30.0,
                "duration_max_sec": 7200.0,
                "repeat_count_min": 3,
            },
            "reason": "pilot tightening",
            "approved_by": "governance-board",
            "prior_version": 1,
        }
        r = client.put("/config/thresholds", json=change)
        assert r.status_code == 200, r.text
        (OUT / "thresholds_v2.json").write_text(
            json.dumps(client.get("/config/thresholds").json(), indent=2) + "\n"
        )
        (OUT / "changes.json").write_text(
            json.dumps(client.get("/config/changes").json(), indent=2) + "\n"
        )
        (OUT / "dashboard.json").write_text(
            json.dumps(client.get("/metrics/dashboard").json(), indent=2) + "\n"
        )
        print("fixtures written to", OUT)
        print("alerts:", [(a["session_id"], round(a["priority"], 3)) for a in alerts["alerts"]])


if __name__ == "__main__":
    sys.exit(main())

"""Shared fixtures: golden datasets and a trained forest, built once per run."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from xpad import domain, evalkit, iforest, simgen

GOLDEN_DIR = Path(__file__).parent / "golden"
FIXTURE_DIR = Path(__file__).parent / "fixtures"


def ts(s: str) -> datetime:
    return datetime.fromisoformat(s).replace(tzinfo=timezone.utc)


def make_session(
    session_id="S1",
    user_id="U001",
    role=domain.Role.NURSE,
    provider_id="P01",
    patient_id="PT0001",
    primary_provider_id="P01",
    event_type=domain.EventType.VIEW,
    event_timestamp=None,
    session_duration_sec=600,
    discharge_timestamp=None,
    referral_documented=False,
    is_anomaly=False,
    anomaly_template=None,
    **extra,
):
    return domain.AuditSession(
        session_id=session_id,
        user_id=user_id,
        role=role,
        provider_id=provider_id,
        patient_id=patient_id,
        primary_provider_id=primary_provider_id,
        event_type=event_type,
        event_timestamp=event_timestamp or ts("2024-06-15T10:00:00"),
        session_duration_sec=session_duration_sec,
        discharge_timestamp=discharge_timestamp,
        referral_documented=referral_documented,
        is_anomaly=is_anomaly,
        anomaly_template=anomaly_template,
        **extra,
    )


def nurse_case(history_len=3):
    """The flagged example case: 02:15, 18 days post-discharge, mismatched
    provider, following three accesses the previous day."""
    t = ts("2024-06-20T02:15:00")
    history = [
        make_session(
            session_id=f"H{i}",
            event_timestamp=t - timedelta(hours=10 + i),
        )
        for i in range(history_len)
    ]
    history.sort(key=lambda s: s.event_timestamp)
    session = make_session(
        session_id="CASE",
        provider_id="P02",
        primary_provider_id="P01",
        event_timestamp=t,
        discharge_timestamp=t - timedelta(days=18, seconds=1000),
    )
    return session, history


@pytest.fixture(scope="session")
def refined_dataset():
    return simgen.generate(simgen.GeneratorProfile.preset("refined", seed=42))


@pytest.fixture(scope="session")
def complex_dataset():
    return simgen.generate(simgen.GeneratorProfile.preset("complex", seed=7))


@pytest.fixture(scope="session")
def refined_derived(refined_dataset):
    return domain.batch_derive(refined_dataset.sessions)


@pytest.fixture(scope="session")
def complex_derived(complex_dataset):
    return domain.batch_derive(complex_dataset.sessions)


@pytest.fixture(scope="session")
def complex_matrix(complex_derived):
    return domain.feature_matrix([fv for _, fv in complex_derived])


@pytest.fixture(scope="session")
def complex_model(complex_dataset, complex_matrix):
    tr = np.array(complex_dataset.train_index)
    contamination = evalkit.default_contamination(complex_dataset.profile)
    return iforest.fit(complex_matrix[tr], contamination=contamination, master_seed=7)


@pytest.fixture(scope="session")
def refined_matrix(refined_derived):
    return domain.feature_matrix([fv for _, fv in refined_derived])


@pytest.fixture(scope="session")
def refined_model(refined_dataset, refined_matrix):
    tr = np.array(refined_dataset.train_index)
    contamination = evalkit.default_contamination(refined_dataset.profile)
    return iforest.fit(refined_matrix[tr], contamination=contamination, master_seed=42)

"""Machine-readable readiness checklist, assessment scoring, and reporting.

Twenty checklist items across four pillars (Governance, Infrastructure &
Interoperability, Workforce, AI Integration), each with an accountable owner,
an evidence indicator, a minimum standard, and a review cadence. Assessments
score Met = 1, Partial = 0.5, Absent = 0; items without an entry count as
Absent. Pillar scores average their items and map to maturity bands:
Foundational below 0.5, Developing from 0.5 through 0.8, Operational above.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

__all__ = [
    "Pillar",
    "Status",
    "MaturityBand",
    "ChecklistItem",
    "AssessmentEntry",
    "ReadinessReport",
    "UnknownItem",
    "DuplicateEntry",
    "builtin_checklist",
    "assess",
    "render_report",
]


class UnknownItem(KeyError):
    """An assessment entry references an item id not in the checklist."""


class DuplicateEntry(ValueError):
    """Two assessment entries reference the same item."""


class Pillar(str, enum.Enum):
    GOVERNANCE = "Governance"
    INFRASTRUCTURE_INTEROPERABILITY = "InfrastructureInteroperability"
    WORKFORCE = "Workforce"
    AI_INTEGRATION = "AIIntegration"

    @property
    def heading(self) -> str:
        return _PILLAR_HEADINGS[self]


_PILLAR_HEADINGS = {
    Pillar.GOVERNANCE: "Governance",
    Pillar.INFRASTRUCTURE_INTEROPERABILITY: "Infrastructure & Interoperability",
    Pillar.WORKFORCE: "Workforce",
    Pillar.AI_INTEGRATION: "AI Integration",
}

_PREFIX_TO_PILLAR = {
    "G": Pillar.GOVERNANCE,
    "I": Pillar.INFRASTRUCTURE_INTEROPERABILITY,
    "W": Pillar.WORKFORCE,
    "A": Pillar.AI_INTEGRATION,
}


class Status(str, enum.Enum):
    MET = "Met"
    PARTIAL = "Partial"
    ABSENT = "Absent"


_STATUS_SCORE = {Status.MET: 1.0, Status.PARTIAL: 0.5, Status.ABSENT: 0.0}


class MaturityBand(str, enum.Enum):
    FOUNDATIONAL = "Foundational"
    DEVELOPING = "Developing"
    OPERATIONAL = "Operational"


def band_for(score: float) -> MaturityBand:
    if score < 0.5:
        return MaturityBand.FOUNDATIONAL
    if score <= 0.8:
        return MaturityBand.DEVELOPING
    return MaturityBand.OPERATIONAL


@dataclass(frozen=True)
class ChecklistItem:
    id: str
    pillar: Pillar
    title: str
    rationale: str
    accountable_owner: str
    evidence_indicator: str
    minimum_standard: str
    review_cadence: str

    def __post_init__(self):
        expected = _PREFIX_TO_PILLAR.get(self.id[:1])
        if expected is not self.pillar:
            raise ValueError(f"item {self.id} prefix does not match pillar {self.pillar}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "pillar": self.pillar.value,
            "title": self.title,
            "rationale": self.rationale,
            "accountable_owner": self.accountable_owner,
            "evidence_indicator": self.evidence_indicator,
            "minimum_standard": self.minimum_standard,
            "review_cadence": self.review_cadence,
        }


@dataclass(frozen=True)
class AssessmentEntry:
    item_id: str
    status: Status
    evidence_refs: tuple[str, ...] = ()
    assessed_at: datetime | None = None
    assessor: str = ""

    def __post_init__(self):
        if self.status is Status.MET and not self.evidence_refs:
            raise ValueError(f"item {self.item_id}: Met requires at least one evidence reference")

    @classmethod
    def from_json(cls, d: dict) -> "AssessmentEntry":
        assessed_at = d.get("assessed_at")
        return cls(
            item_id=d["item_id"],
            status=Status(d["status"]),
            evidence_refs=tuple(d.get("evidence_refs", ())),
            assessed_at=datetime.fromisoformat(assessed_at) if assessed_at else None,
            assessor=d.get("assessor", ""),
        )


@dataclass(frozen=True)
class ReadinessReport:
    pillar_scores: dict[Pillar, float]
    pillar_bands: dict[Pillar, MaturityBand]
    overall_score: float
    overall_band: MaturityBand
    gaps: tuple[tuple[str, Status], ...]  # non-Met items, by pillar then id

    def to_json(self) -> dict:
        return {
            "pillars": {
                p.value: {"score": self.pillar_scores[p], "band": self.pillar_bands[p].value}
                for p in Pillar
            },
            "overall": {"score": self.overall_score, "band": self.overall_band.value},
            "gaps": [{"item_id": i, "status": s.value} for i, s in self.gaps],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ReadinessReport":
        pillar_scores = {Pillar(p): v["score"] for p, v in d["pillars"].items()}
        pillar_bands = {Pillar(p): MaturityBand(v["band"]) for p, v in d["pillars"].items()}
        return cls(
            pillar_scores=pillar_scores,
            pillar_bands=pillar_bands,
            overall_score=d["overall"]["score"],
            overall_band=MaturityBand(d["overall"]["band"]),
            gaps=tuple((g["item_id"], Status(g["status"])) for g in d["gaps"]),
        )


def _item(id_, title, rationale, owner, evidence, minimum, cadence) -> ChecklistItem:
    return ChecklistItem(
        id=id_,
        pillar=_PREFIX_TO_PILLAR[id_[0]],
        title=title,
        rationale=rationale,
        accountable_owner=owner,
        evidence_indicator=evidence,
        minimum_standard=minimum,
        review_cadence=cadence,
    )


_CHECKLIST: tuple[ChecklistItem, ...] = (
    _item(
        "G1",
        "Named senior owner for audit-log monitoring and thresholds (RACI defined)",
        "Establishes accountability for risk and resources",
        "CIO/CCO (privacy)",
        "RACI chart; appointment minute; role description",
        "One executive and one operational delegate named",
        "Annual or on role change",
    ),
    _item(
        "G2",
        "Policy for cross-provider audit-log sharing & investigation",
        "Lawful basis and consistent handling across sites",
        "Privacy office",
        "Approved policy; DPIA; DSAs/DPAs",
        "Policy approved and communicated; DPIA completed",
        "Annual",
    ),
    _item(
        "G3",
        "Escalation playbook (triage → investigation → outcome)",
        "Reduces variance and delays in responses",
        "Compliance lead",
        "SOP/playbook; example tickets with timestamps",
        "≤2 business days from alert to triage; time-to-closure target defined",
        "Quarterly KPI review",
    ),
    _item(
        "G4",
        "Threshold/change control process for rules/models",
        "Prevents untracked drift in alerting behaviour",
        "Data governance board",
        "Change log; approval records; versioned configs",
        "All changes ticketed and approved before deployment",
        "Per change",
    ),
    _item(
        "G5",
        "Auditability of decisions (who reviewed, rationale, outcome)",
        "Supports accountability to patients/regulators",
        "Audit committee",
        "Case logs with reviewer ID and rationale; retention policy",
        "≥95% alerts with documented disposition",
        "Monthly spot check",
    ),
    _item(
        "I1",
        "Common audit schema across sites (user, patient, role, provider, event, timestamp, location, device, outcome)",
        "Enables consistent features and joins",
        "Enterprise architect",
        "Data dictionary; schema conformance report",
        "≥98% fields present and typed per spec",
        "Monthly",
    ),
    _item(
        "I2",
        "Identity resolution & role mapping across providers",
        "Avoids false signals and missed links",
        "IAM lead",
        "Match rates; role mapping table; exceptions log",
        "≥97% deterministic/probabilistic matches; ≤3% unmapped roles",
        "Monthly",
    ),
    _item(
        "I3",
        "Secure ETL/API pipelines with observability (completeness/latency)",
        "Ensures timely, trustworthy data",
        "Data engineering",
        "Pipeline dashboards; alerting rules; SLA",
        "≥99% record completeness; <24h latency to monitoring store",
        "Daily/weekly",
    ),
    _item(
        "I4",
        "Data quality checks (missingness, duplicates, time skew)",
        "Protects model performance & explanations",
        "Data stewardship",
        "DQ report; automated tests in CI/CD",
        "All checks green or exceptions waived",
        "Each release",
    ),
    _item(
        "I5",
        "Role-based access control (RBAC) & least-privilege for monitoring tools",
        "Reduces insider risk",
        "Security lead",
        "Access reviews; privilege matrix",
        "Quarterly access recertification; SoD conflicts resolved",
        "Quarterly",
    ),
    _item(
        "W1",
        "Designated reviewer function with protected time",
        "Ensures alerts are actually handled",
        "Operations manager",
        "Roster; capacity plan",
        "Coverage ≥ 5 days/week; backlog ≤ 2 weeks",
        "Weekly",
    ),
    _item(
        "W2",
        "Training on audit-log interpretation, SHAP-based explanations, and bias awareness",
        "Builds consistent dispositions and trust",
        "Training lead",
        "Curriculum; attendance; competency check",
        "≥90% reviewers certified; ≥80% pass on assessment",
        "Semi-annual",
    ),
    _item(
        "W3",
        "Clinician communication plan (what triggers alerts; how to contest)",
        "Minimises friction and improves data quality",
        "CMIO/Clinical liaison",
        "Briefings; FAQs; intranet page; feedback stats",
        "≥ 2 comms per year; ticket response SLA defined",
        "Semi-annual",
    ),
    _item(
        "W4",
        "Feedback loop from reviewers/clinicians to improve rules & features",
        "Converts operational learning into product changes",
        "Product owner",
        "Backlog with tagged feedback; release notes",
        "≥ 1 improvement merged per quarter",
        "Quarterly",
    ),
    _item(
        "A1",
        "Model card & validation memo (data, assumptions, limits, fairness)",
        "Transparent documentation for governance",
        "ML lead",
        "Model card; validation results; sign-off",
        "Published before go-live and on each major update",
        "Per release",
    ),
    _item(
        "A2",
        "Reviewer-facing explanations (global + local SHAP) embedded in UI",
        "Supports defensible decisions & triage",
        "ML lead / UX",
        "Screenshots; example cases; usability test notes",
        "Global feature summary + per-case SHAP available",
        "Each release",
    ),
    _item(
        "A3",
        "Performance dashboard (precision/recall, alert volume, time-to-disposition)",
        "Tracks value and burden",
        "Analytics lead",
        "Live dashboard; monthly KPI pack",
        "Targets set by governance (e.g., precision ≥ 0.6, time-to-triage ≤ 2 days)",
        "Monthly",
    ),
    _item(
        "A4",
        "Data/model drift monitoring with triggers (recalibration/retraining)",
        "Prevents silent degradation",
        "ML ops",
        "Drift metrics (PSI/KS); trigger thresholds; retrain log",
        "Drift < threshold or retrain executed within 30 days",
        "Monthly",
    ),
    _item(
        "A5",
        "Safe rollout & rollback (A/B, shadow mode, canary)",
        "Lowers deployment risk",
        "DevOps",
        "Runbooks; deployment history",
        "Rollback tested in last 6 months",
        "Per release",
    ),
    _item(
        "A6",
        "Post-implementation review (PIR) including false-positive/negative audit",
        "Institutional learning",
        "Governance board",
        "PIR report; actions & owners",
        "Completed within 90 days of go-live and annually",
        "Annual",
    ),
)


def builtin_checklist() -> tuple[ChecklistItem, ...]:
    """The full built-in checklist: items G1-G5, I1-I5, W1-W4, A1-A6."""
    return _CHECKLIST


def assess(
    entries: Iterable[AssessmentEntry],
    checklist: Sequence[ChecklistItem] | None = None,
) -> ReadinessReport:
    """Score an assessment; items without entries count as Absent."""
    checklist = tuple(checklist) if checklist is not None else builtin_checklist()
    known = {item.id for item in checklist}
    by_id: dict[str, AssessmentEntry] = {}
    for entry in entries:
        if entry.item_id not in known:
            raise UnknownItem(entry.item_id)
        if entry.item_id in by_id:
            raise DuplicateEntry(f"duplicate assessment for item {entry.item_id}")
        by_id[entry.item_id] = entry

    pillar_scores: dict[Pillar, float] = {}
    for pillar in Pillar:
        items = [i for i in checklist if i.pillar is pillar]
        if not items:
            pillar_scores[pillar] = 0.0
            continue
        total = sum(
            _STATUS_SCORE[by_id[i.id].status if i.id in by_id else Status.ABSENT] for i in items
        )
        pillar_scores[pillar] = total / len(items)

    pillar_bands = {p: band_for(s) for p, s in pillar_scores.items()}
    overall = sum(pillar_scores.values()) / len(pillar_scores)
    gaps = tuple(
        (item.id, by_id[item.id].status if item.id in by_id else Status.ABSENT)
        for pillar in Pillar
        for item in sorted((i for i in checklist if i.pillar is pillar), key=lambda i: i.id)
        if (by_id[item.id].status if item.id in by_id else Status.ABSENT) is not Status.MET
    )
    return ReadinessReport(
        pillar_scores=pillar_scores,
        pillar_bands=pillar_bands,
        overall_score=overall,
        overall_band=band_for(overall),
        gaps=gaps,
    )


def render_report(report: ReadinessReport, format: str = "json") -> str:
    """Serialize a report as stable JSON or pillar-grouped markdown."""
    if format == "json":
        return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if format != "markdown":
        raise ValueError(f"unknown format: {format!r}")

    gap_by_pillar: dict[Pillar, list[tuple[str, Status]]] = {p: [] for p in Pillar}
    items = {i.id: i for i in builtin_checklist()}
    for item_id, status in report.gaps:
        pillar = _PREFIX_TO_PILLAR[item_id[0]]
        gap_by_pillar[pillar].append((item_id, status))

    lines = ["# Readiness report", ""]
    lines.append(f"Overall: {report.overall_score:.2f} ({report.overall_band.value})")
    lines.append("")
    for pillar in Pillar:
        lines.append(f"## {pillar.heading}")
        lines.append("")
        lines.append(
            f"Score {report.pillar_scores[pillar]:.2f} — {report.pillar_bands[pillar].value}"
        )
        gaps = gap_by_pillar[pillar]
        if gaps:
            lines.append("")
            lines.append("Gaps:")
            for item_id, status in gaps:
                title = items[item_id].title if item_id in items else item_id
                lines.append(f"- {item_id} ({status.value}): {title}")
        lines.append("")
    return "\n".join(lines)

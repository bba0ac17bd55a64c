"""Checklist content snapshot, scoring arithmetic, maturity bands, rendering."""

import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xpad import readiness
from xpad.readiness import (
    AssessmentEntry,
    DuplicateEntry,
    MaturityBand,
    Pillar,
    ReadinessReport,
    Status,
    UnknownItem,
    assess,
    band_for,
    builtin_checklist,
    render_report,
)

from conftest import FIXTURE_DIR

ALL_IDS = [item.id for item in builtin_checklist()]


def met(item_id):
    return AssessmentEntry(
        item_id=item_id,
        status=Status.MET,
        evidence_refs=(f"artifact://{item_id.lower()}",),
        assessed_at=datetime(2024, 7, 1, tzinfo=timezone.utc),
        assessor="compliance-lead",
    )


class TestBuiltinChecklist:
    def test_exactly_twenty_items(self):
        assert len(builtin_checklist()) == 20

    def test_ids_and_pillar_prefixes(self):
        assert ALL_IDS == [
            "G1", "G2", "G3", "G4", "G5",
            "I1", "I2", "I3", "I4", "I5",
            "W1", "W2", "W3", "W4",
            "A1", "A2", "A3", "A4", "A5", "A6",
        ]
        for item in builtin_checklist():
            assert item.pillar is {
                "G": Pillar.GOVERNANCE,
                "I": Pillar.INFRASTRUCTURE_INTEROPERABILITY,
                "W": Pillar.WORKFORCE,
                "A": Pillar.AI_INTEGRATION,
            }[item.id[0]]

    def test_matches_committed_fixture_verbatim(self):
        fixture = json.loads((FIXTURE_DIR / "checklist_items.json").read_text())
        current = [item.to_json() for item in builtin_checklist()]
        assert current == fixture

    def test_known_minimum_standards(self):
        by_id = {i.id: i for i in builtin_checklist()}
        assert by_id["A4"].minimum_standard == "Drift < threshold or retrain executed within 30 days"
        assert by_id["G5"].minimum_standard == "≥95% alerts with documented disposition"
        assert by_id["G3"].minimum_standard.startswith("≤2 business days")

    def test_i3_pillar(self):
        by_id = {i.id: i for i in builtin_checklist()}
        assert by_id["I3"].pillar is Pillar.INFRASTRUCTURE_INTEROPERABILITY


class TestAssess:
    def test_all_met_is_operational(self):
        report = assess([met(i) for i in ALL_IDS])
        for pillar in Pillar:
            assert report.pillar_scores[pillar] == 1.0
            assert report.pillar_bands[pillar] is MaturityBand.OPERATIONAL
        assert report.overall_score == 1.0
        assert report.gaps == ()

    def test_g1_absent_scores_governance_developing(self):
        report = assess([met(i) for i in ALL_IDS if i != "G1"])
        assert report.pillar_scores[Pillar.GOVERNANCE] == pytest.approx(0.8)
        assert report.pillar_bands[Pillar.GOVERNANCE] is MaturityBand.DEVELOPING
        assert ("G1", Status.ABSENT) in report.gaps

    def test_empty_assessment_all_foundational(self):
        report = assess([])
        for pillar in Pillar:
            assert report.pillar_scores[pillar] == 0.0
            assert report.pillar_bands[pillar] is MaturityBand.FOUNDATIONAL
        assert len(report.gaps) == 20

    def test_partial_scores_half(self):
        entries = [AssessmentEntry(item_id="G1", status=Status.PARTIAL)]
        report = assess(entries)
        assert report.pillar_scores[Pillar.GOVERNANCE] == pytest.approx(0.1)

    def test_unknown_item(self):
        with pytest.raises(UnknownItem):
            assess([AssessmentEntry(item_id="Z9", status=Status.ABSENT)])

    def test_duplicate_entries(self):
        with pytest.raises(DuplicateEntry):
            assess([met("G1"), met("G1")])

    def test_met_requires_evidence(self):
        with pytest.raises(ValueError):
            AssessmentEntry(item_id="G1", status=Status.MET, evidence_refs=())

    def test_band_boundaries_belong_to_developing(self):
        assert band_for(0.5) is MaturityBand.DEVELOPING
        assert band_for(0.8) is MaturityBand.DEVELOPING
        assert band_for(0.49999) is MaturityBand.FOUNDATIONAL
        assert band_for(0.80001) is MaturityBand.OPERATIONAL

    def test_gaps_sorted_by_pillar_then_id(self):
        report = assess([])
        assert [g[0] for g in report.gaps] == ALL_IDS

    @given(
        st.dictionaries(
            st.sampled_from(ALL_IDS),
            st.sampled_from([Status.ABSENT, Status.PARTIAL, Status.MET]),
            max_size=20,
        ),
        st.sampled_from(ALL_IDS),
    )
    @settings(max_examples=50, deadline=None)
    def test_upgrading_never_lowers_scores(self, statuses, target):
        def entry(i, s):
            refs = ("artifact://x",) if s is Status.MET else ()
            return AssessmentEntry(item_id=i, status=s, evidence_refs=refs)

        before = {**statuses}
        before[target] = Status.ABSENT
        after = {**statuses}
        after[target] = Status.MET
        r1 = assess([entry(i, s) for i, s in before.items()])
        r2 = assess([entry(i, s) for i, s in after.items()])
        for pillar in Pillar:
            assert r2.pillar_scores[pillar] >= r1.pillar_scores[pillar]
        assert r2.overall_score >= r1.overall_score

    def test_pure_function(self):
        entries = [met("G1"), AssessmentEntry(item_id="A4", status=Status.PARTIAL)]
        assert assess(entries) == assess(entries)


class TestRender:
    def test_json_round_trip(self):
        report = assess([met(i) for i in ALL_IDS[:7]])
        parsed = ReadinessReport.from_json(json.loads(render_report(report, "json")))
        assert parsed == report

    def test_markdown_contains_four_pillar_headings(self):
        report = assess([met(i) for i in ALL_IDS])
        md = render_report(report, "markdown")
        for heading in ("Governance", "Infrastructure & Interoperability", "Workforce", "AI Integration"):
            assert f"## {heading}" in md

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_report(assess([]), "yaml")

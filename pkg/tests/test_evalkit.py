"""Metrics: confusion arithmetic, rank-based AUC vs brute force, harness runs."""

import json
import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr as scipy_spearman

from xpad import evalkit, simgen
from xpad.evalkit import (
    ConfusionMatrix,
    DegenerateColumn,
    DegenerateLabels,
    DetectorConfig,
    LengthMismatch,
    UndefinedReduction,
    alert_burden,
    burden_comparison,
    confusion,
    metrics,
    pr_curve,
    roc_auc,
    roc_curve,
    roc_point,
    run_experiment,
    spearman,
)


def brute_force_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestConfusionMetrics:
    def test_abstract_configuration(self):
        # 99 true alerts, 18 benign threshold crossers, nothing missed
        cm = ConfusionMatrix(tp=99, fp=18, fn=0, tn=383)
        p, r, f1, undefined = metrics(cm)
        assert p == pytest.approx(99 / 117)
        assert r == 1.0
        assert not undefined

    def test_all_correct(self):
        cm = confusion([1, 0, 1, 0], [1, 0, 1, 0])
        p, r, f1, _ = metrics(cm)
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_no_predicted_positives_convention(self):
        cm = confusion([1, 1, 0], [0, 0, 0])
        p, r, f1, undefined = metrics(cm)
        assert p == 0.0 and r == 0.0 and f1 == 0.0
        assert "precision" in undefined and "f1" in undefined

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([1, 0], [1])
        with pytest.raises(LengthMismatch):
            confusion([], [])

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, pairs):
        labels = [y for y, _ in pairs]
        preds = [p for _, p in pairs]
        cm1 = confusion(labels, preds)
        rng = np.random.default_rng(0)
        order = rng.permutation(len(pairs))
        cm2 = confusion([labels[i] for i in order], [preds[i] for i in order])
        assert cm1 == cm2


class TestAuc:
    def test_known_value(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_full_tie_is_half(self):
        assert roc_auc([0, 1], [0.5, 0.5]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            roc_auc([1, 1], [0.1, 0.2])

    @given(
        st.lists(st.tuples(st.booleans(), st.floats(0, 1, allow_nan=False)), min_size=2, max_size=200)
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_pairwise(self, pairs):
        labels = [y for y, _ in pairs]
        scores = [s for _, s in pairs]
        if not (0 < sum(labels) < len(labels)):
            return
        assert roc_auc(labels, scores) == pytest.approx(brute_force_auc(labels, scores), abs=1e-12)


class TestCurves:
    def test_roc_monotone_and_spans(self):
        rng = np.random.default_rng(1)
        scores = rng.random(100)
        labels = rng.random(100) < 0.3
        labels[0], labels[1] = True, False
        pts = roc_curve(labels, scores)
        assert pts[0] == (0.0, 0.0)
        assert pts[-1] == (1.0, 1.0)
        fprs = [p[0] for p in pts]
        tprs = [p[1] for p in pts]
        assert all(b >= a - 1e-15 for a, b in zip(fprs, fprs[1:]))
        assert all(b >= a - 1e-15 for a, b in zip(tprs, tprs[1:]))

    def test_pr_endpoint_recall_one(self):
        rng = np.random.default_rng(2)
        scores = rng.random(50)
        labels = rng.random(50) < 0.4
        labels[0], labels[1] = True, False
        pts = pr_curve(labels, scores)
        assert pts[-1][0] == 1.0

    def test_roc_point(self):
        cm = ConfusionMatrix(tp=8, fp=2, fn=2, tn=88)
        fpr, tpr = roc_point(cm)
        assert fpr == pytest.approx(2 / 90)
        assert tpr == pytest.approx(0.8)


class TestSpearman:
    def test_monotone_identity(self):
        assert spearman([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_reversed(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_matches_independent_oracle(self):
        x = [1, 2, 3, 4]
        y = [0, 0, 1, 1]
        assert spearman(x, y) == pytest.approx(scipy_spearman(x, y).statistic, abs=1e-12)

    @given(
        st.lists(
            st.tuples(
                st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False)
            ),
            min_size=3,
            max_size=200,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_oracle_equivalence_random(self, pairs):
        x = [a for a, _ in pairs]
        y = [b for _, b in pairs]
        if len(set(x)) < 2 or len(set(y)) < 2:
            return
        assert spearman(x, y) == pytest.approx(scipy_spearman(x, y).statistic, abs=1e-12)

    def test_degenerate_column(self):
        with pytest.raises(DegenerateColumn):
            spearman([1, 1, 1], [1, 2, 3])


class TestBurden:
    def test_alerts_per_1000(self):
        cm = ConfusionMatrix(tp=100, fp=20, fn=10, tn=370)
        alerts, _ = alert_burden(cm, 500)
        assert alerts == pytest.approx(240.0)

    def test_missed_rate(self):
        cm = ConfusionMatrix(tp=18, fp=2, fn=182, tn=798)
        _, missed = alert_burden(cm, 1000)
        assert missed == pytest.approx(0.91)

    def test_reduction(self):
        cm_rules = ConfusionMatrix(tp=80, fp=20, fn=0, tn=900)
        cm_if = ConfusionMatrix(tp=20, fp=1, fn=60, tn=919)
        assert burden_comparison(cm_rules, cm_if, 1000) == pytest.approx(0.79)

    def test_zero_rules_alerts_undefined(self):
        cm_rules = ConfusionMatrix(tp=0, fp=0, fn=10, tn=90)
        cm_if = ConfusionMatrix(tp=5, fp=0, fn=5, tn=90)
        with pytest.raises(UndefinedReduction):
            burden_comparison(cm_rules, cm_if, 100)


def _dir_digest(path: Path) -> dict:
    return {
        p.relative_to(path).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(path.rglob("*"))
        if p.is_file()
    }


class TestRunExperiment:
    def test_five_seed_protocol(self, tmp_path):
        prof = simgen.GeneratorProfile.preset("refined", seed=1)
        report = run_experiment(prof, detector="rules", seeds=[1, 2, 3, 4, 5], out_dir=tmp_path / "run")
        assert report.seeds == (1, 2, 3, 4, 5)
        assert len(report.per_seed["rules"]) == 5
        assert report.sd is not None
        # sample SD uses n-1
        vals = [r.precision for r in report.per_seed["rules"]]
        assert report.sd["rules"]["precision"] == pytest.approx(np.std(vals, ddof=1))
        assert report.mean["rules"]["precision"] == pytest.approx(np.mean(vals))

    def test_single_seed_sd_unavailable(self, tmp_path):
        prof = simgen.GeneratorProfile.preset("refined", seed=1)
        report = run_experiment(prof, detector="rules", seeds=[3], out_dir=tmp_path / "run")
        assert report.sd is None
        metrics_text = (tmp_path / "run" / "metrics.csv").read_text()
        assert "n/a" in metrics_text

    def test_rerun_is_byte_identical(self, tmp_path):
        prof = simgen.GeneratorProfile.preset("refined", seed=1)
        run_experiment(prof, detector="both", seeds=[1, 2], out_dir=tmp_path / "a")
        run_experiment(prof, detector="both", seeds=[1, 2], out_dir=tmp_path / "b")
        da = _dir_digest(tmp_path / "a")
        db = _dir_digest(tmp_path / "b")
        assert da == db
        assert "manifest.json" in da and "metrics.csv" in da

    def test_artifact_layout(self, tmp_path):
        prof = simgen.GeneratorProfile.preset("refined", seed=1)
        run_experiment(prof, detector="both", seeds=[2], out_dir=tmp_path / "run")
        run = tmp_path / "run"
        for name in (
            "manifest.json",
            "metrics.csv",
            "burden.csv",
            "spearman.csv",
            "confusion_rules_2.csv",
            "confusion_iforest_2.csv",
            "roc_2.csv",
            "pr_2.csv",
        ):
            assert (run / name).exists(), name
        hists = list((run / "histograms").glob("*.csv"))
        assert len(hists) == 5
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["seeds"] == [2]
        assert manifest["profile"]["name"] == "refined"

    def test_errors(self, tmp_path):
        prof = simgen.GeneratorProfile.preset("refined", seed=1)
        with pytest.raises(ValueError):
            run_experiment(prof, detector="bogus", seeds=[1])
        with pytest.raises(ValueError):
            run_experiment(prof, detector="rules", seeds=[])

    def test_default_contamination_rule(self):
        refined = simgen.GeneratorProfile.preset("refined", seed=0)
        cx = simgen.GeneratorProfile.preset("complex", seed=0)
        assert evalkit.default_contamination(refined) == pytest.approx(99 / 500)
        assert evalkit.default_contamination(cx) == pytest.approx(0.03)

"""Metrics and the repeatable experiment harness.

Implements the evaluation protocol: generate a dataset per seed, tune/fit the
detectors on the training split, evaluate on the held-out split, and report
precision, recall, F1 and ROC-AUC per seed with mean and sample SD across
seeds. The harness also emits plot-ready artifacts (confusion matrices, ROC
and PR points, alert-burden tables, feature histograms, rank-correlation
matrices) under a run directory whose contents are byte-stable for a given
configuration: nothing in the outputs depends on the clock.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import iforest as iforest_mod
from . import rules as rules_mod
from . import simgen
from .domain import DEFAULT_FEATURES, ModelFeatureSet, batch_derive, feature_matrix

__all__ = [
    "ConfusionMatrix",
    "MetricReport",
    "SeedSweepReport",
    "DetectorConfig",
    "LengthMismatch",
    "DegenerateLabels",
    "DegenerateColumn",
    "UndefinedReduction",
    "confusion",
    "metrics",
    "roc_auc",
    "roc_curve",
    "pr_curve",
    "roc_point",
    "spearman",
    "alert_burden",
    "burden_comparison",
    "default_contamination",
    "run_experiment",
]


class LengthMismatch(ValueError):
    """Label and prediction sequences have different lengths."""


class DegenerateLabels(ValueError):
    """Both classes are required but only one is present."""


class DegenerateColumn(ValueError):
    """A constant column has no rank correlation."""


class UndefinedReduction(ValueError):
    """Alert-volume reduction is undefined when the baseline has no alerts."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    alerts_per_1000: float
    missed_anomaly_rate: float
    roc_auc: float | None = None
    roc_point: tuple[float, float] | None = None
    undefined: frozenset[str] = frozenset()


@dataclass(frozen=True)
class SeedSweepReport:
    seeds: tuple[int, ...]
    per_seed: dict[str, tuple[MetricReport, ...]]  # detector -> one report per seed
    mean: dict[str, dict[str, float]]
    sd: dict[str, dict[str, float]] | None  # None when a single seed ran


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings for one experiment run.

    contamination None resolves per profile: the known anomaly rate when every
    injection is full strength, and a calibrated low-volume operating point
    (0.3 of the rule-detectable rate) when part of the injections are
    attenuated, which is what makes the isolation forest the high-precision,
    low-volume side of the comparison.
    """

    n_trees: int = 100
    psi_mode: str | int = "auto"
    contamination: float | None = None
    feature_set: ModelFeatureSet = DEFAULT_FEATURES
    thresholds: rules_mod.RuleThresholds = field(default_factory=rules_mod.RuleThresholds)
    rules_grid: dict | None = None
    objective: rules_mod.Objective = field(default_factory=rules_mod.Objective.f1)

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "psi_mode": self.psi_mode,
            "contamination": self.contamination,
            "feature_set": list(self.feature_set.names),
            "thresholds": self.thresholds.to_json(),
            "rules_grid": self.rules_grid,
            "objective": {"kind": self.objective.kind, "min_precision": self.objective.min_precision},
        }


def default_contamination(profile: simgen.GeneratorProfile) -> float:
    known = profile.n_anomalies / profile.n_sessions
    if profile.attenuated_fraction == 0.0:
        return known
    detectable = known * (1.0 - profile.attenuated_fraction)
    return detectable * 0.3


def confusion(labels: Sequence, predictions: Sequence) -> ConfusionMatrix:
    if len(labels) != len(predictions):
        raise LengthMismatch(f"{len(labels)} labels vs {len(predictions)} predictions")
    if len(labels) == 0:
        raise LengthMismatch("need at least one labeled example")
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predictions):
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics(cm: ConfusionMatrix) -> tuple[float, float, float, frozenset[str]]:
    """(precision, recall, f1, undefined-metric names); 0-denominators give 0."""
    undefined = set()
    if cm.tp + cm.fp:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        undefined.add("precision")
    if cm.tp + cm.fn:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        undefined.add("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.add("f1")
    return precision, recall, f1, frozenset(undefined)


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    sorted_x = x[order]
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(labels: Sequence, scores: Sequence) -> float:
    """AUC as the midrank statistic: P(score+ > score-) + 0.5 P(tie)."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels vs {len(s)} scores")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs both classes present")
    ranks = _midranks(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(labels: Sequence, scores: Sequence) -> list[tuple[float, float]]:
    """(fpr, tpr) swept over unique thresholds descending, from (0,0) to (1,1)."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels vs {len(s)} scores")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC needs both classes present")
    points = [(0.0, 0.0)]
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        points.append((float((pred & ~y).sum() / n_neg), float((pred & y).sum() / n_pos)))
    return points


def pr_curve(labels: Sequence, scores: Sequence) -> list[tuple[float, float]]:
    """(recall, precision) per unique threshold descending; ends at recall 1."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels vs {len(s)} scores")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabels("PR curve needs both classes present")
    points = []
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        tp = int((pred & y).sum())
        fp = int((pred & ~y).sum())
        points.append((tp / n_pos, tp / (tp + fp) if tp + fp else 0.0))
    if points[-1][0] < 1.0:  # threshold below every score: everything flagged
        points.append((1.0, n_pos / len(y)))
    return points


def roc_point(cm: ConfusionMatrix) -> tuple[float, float]:
    """A binary classifier's single operating point in ROC space."""
    fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn else 0.0
    tpr = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return (fpr, tpr)


def spearman(x: Sequence, y: Sequence) -> float:
    """Rank correlation: Pearson correlation of midranks."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if len(xa) != len(ya):
        raise LengthMismatch(f"{len(xa)} vs {len(ya)} values")
    if len(xa) < 3:
        raise ValueError("spearman needs at least 3 observations")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise DegenerateColumn("constant column has no rank correlation")
    rx = _midranks(xa)
    ry = _midranks(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def alert_burden(cm: ConfusionMatrix, n_sessions: int) -> tuple[float, float]:
    """(alerts per 1000 sessions, share of anomalies missed)."""
    if n_sessions <= 0:
        raise ValueError("n_sessions must be positive")
    alerts = 1000.0 * (cm.tp + cm.fp) / n_sessions
    missed = cm.fn / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return alerts, missed


def burden_comparison(cm_rules: ConfusionMatrix, cm_if: ConfusionMatrix, n_sessions: int) -> float:
    """Fractional alert-volume reduction of the forest relative to the rules."""
    rules_alerts, _ = alert_burden(cm_rules, n_sessions)
    if_alerts, _ = alert_burden(cm_if, n_sessions)
    if rules_alerts == 0:
        raise UndefinedReduction("rules produced no alerts; reduction undefined")
    return 1.0 - if_alerts / rules_alerts


# -- experiment harness -------------------------------------------------------

_METRIC_FIELDS = ("precision", "recall", "f1", "roc_auc", "alerts_per_1000", "missed_anomaly_rate")


def _report(cm: ConfusionMatrix, n_sessions: int, auc: float | None, point=None) -> MetricReport:
    precision, recall, f1, undefined = metrics(cm)
    alerts, missed = alert_burden(cm, n_sessions)
    return MetricReport(
        precision=precision,
        recall=recall,
        f1=f1,
        alerts_per_1000=alerts,
        missed_anomaly_rate=missed,
        roc_auc=auc,
        roc_point=point,
        undefined=undefined,
    )


def run_experiment(
    profile: simgen.GeneratorProfile,
    detector: str = "both",
    config: DetectorConfig | None = None,
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
    out_dir: str | Path | None = None,
) -> SeedSweepReport:
    """Generate, fit, and evaluate once per seed; optionally emit artifacts.

    detector: "rules", "iforest", or "both". The profile's own seed field is
    ignored; each run regenerates the dataset at one of the given seeds.
    """
    if detector not in ("rules", "iforest", "both"):
        raise ValueError(f"unknown detector: {detector!r}")
    if not seeds:
        raise ValueError("need at least one seed")
    config = config or DetectorConfig()
    detectors = ["rules", "iforest"] if detector == "both" else [detector]

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "histograms").mkdir(parents=True, exist_ok=True)

    per_seed: dict[str, list[MetricReport]] = {d: [] for d in detectors}
    dataset_digests: dict[str, str] = {}
    burden_rows = []
    spearman_rows = []
    artifacts: dict[str, str] = {}

    for seed in seeds:
        prof = replace(profile, seed=int(seed))
        ds = simgen.generate(prof)
        dataset_digests[str(seed)] = _dataset_digest(ds)
        derived = batch_derive(ds.sessions)
        X = feature_matrix([fv for _, fv in derived], config.feature_set)
        y = np.array([s.is_anomaly for s in ds.sessions], dtype=bool)
        tr = np.array(ds.train_index, dtype=int)
        te = np.array(ds.test_index, dtype=int)
        n_test = len(te)

        cms: dict[str, ConfusionMatrix] = {}
        if "rules" in detectors:
            train_rows = [(derived[i][1], derived[i][0], bool(y[i])) for i in tr]
            tuned = rules_mod.tune(
                train_rows, config.rules_grid or {}, config.objective, base=config.thresholds
            )
            preds = np.array(
                [rules_mod.classify(derived[i][0], derived[i][1], tuned).flagged for i in te]
            )
            cm = confusion(y[te], preds)
            cms["rules"] = cm
            per_seed["rules"].append(_report(cm, n_test, None, point=roc_point(cm)))

        if "iforest" in detectors:
            cont = config.contamination
            if cont is None:
                cont = default_contamination(prof)
            model = iforest_mod.fit(
                X[tr],
                n_trees=config.n_trees,
                psi_mode=config.psi_mode,
                contamination=cont,
                master_seed=prof.seed,
                feature_set=config.feature_set,
            )
            scores, _ = iforest_mod.score_matrix(model, X[te])
            preds = scores >= model.score_threshold
            cm = confusion(y[te], preds)
            cms["iforest"] = cm
            auc = roc_auc(y[te], scores) if 0 < y[te].sum() < n_test else None
            per_seed["iforest"].append(_report(cm, n_test, auc))
            if out is not None:
                _write_points(out / f"roc_{seed}.csv", ("fpr", "tpr"), roc_curve(y[te], scores))
                _write_points(out / f"pr_{seed}.csv", ("recall", "precision"), pr_curve(y[te], scores))

        for d, cm in cms.items():
            alerts, missed = alert_burden(cm, n_test)
            burden_rows.append([seed, d, _fmt(alerts), _fmt(missed)])
            if out is not None:
                _write_confusion(out / f"confusion_{d}_{seed}.csv", cm)
        if len(cms) == 2:
            reduction = burden_comparison(cms["rules"], cms["iforest"], n_test)
            burden_rows.append([seed, "reduction_vs_rules", _fmt(reduction), ""])

        if out is not None:
            names = config.feature_set.names
            for j, name in enumerate(names):
                for k in range(j + 1, len(names)):
                    spearman_rows.append([seed, name, names[k], _fmt(_safe_spearman(X[:, j], X[:, k]))])
                spearman_rows.append([seed, name, "is_anomaly", _fmt(_safe_spearman(X[:, j], y.astype(float)))])
            for j, name in enumerate(names):
                _write_histogram(out / "histograms" / f"{name}_seed{seed}.csv", X[:, j])

    mean, sd = _aggregate(per_seed)
    report = SeedSweepReport(
        seeds=tuple(int(s) for s in seeds),
        per_seed={d: tuple(v) for d, v in per_seed.items()},
        mean=mean,
        sd=sd,
    )

    if out is not None:
        _write_metrics_csv(out / "metrics.csv", report)
        _write_rows(out / "burden.csv", ("seed", "detector", "alerts_per_1000", "missed_anomaly_rate"), burden_rows)
        _write_rows(out / "spearman.csv", ("seed", "a", "b", "rho"), spearman_rows)
        manifest = {
            "profile": profile.to_json(),
            "detector": detector,
            "config": config.to_json(),
            "seeds": [int(s) for s in seeds],
            "dataset_digests": dataset_digests,
            "tool": {"name": "xpad", "version": _version()},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return report


def _version() -> str:
    from . import __version__

    return __version__


def _safe_spearman(a, b) -> float | None:
    try:
        return spearman(a, b)
    except DegenerateColumn:
        return None


def _dataset_digest(ds: simgen.Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for s in ds.sessions:
        w.writerow([s.session_id, s.user_id, s.patient_id, s.event_timestamp.isoformat(), int(s.is_anomaly)])
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _aggregate(per_seed: dict[str, list[MetricReport]]):
    mean: dict[str, dict[str, float]] = {}
    sd: dict[str, dict[str, float]] | None = {}
    for d, reports in per_seed.items():
        mean[d] = {}
        sd[d] = {}
        for f in _METRIC_FIELDS:
            vals = [getattr(r, f) for r in reports if getattr(r, f) is not None]
            if not vals:
                continue
            mean[d][f] = float(np.mean(vals))
            if len(vals) >= 2:
                sd[d][f] = float(np.std(vals, ddof=1))
    if any(len(reports) < 2 for reports in per_seed.values()):
        sd = None
    return mean, sd


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_points(path: Path, header, points) -> None:
    _write_rows(path, header, [[_fmt(a), _fmt(b)] for a, b in points])


def _write_confusion(path: Path, cm: ConfusionMatrix) -> None:
    _write_rows(path, ("tp", "fp", "fn", "tn"), [[cm.tp, cm.fp, cm.fn, cm.tn]])


def _write_histogram(path: Path, values: np.ndarray, bins: int = 20) -> None:
    counts, edges = np.histogram(values, bins=bins)
    rows = [[_fmt(edges[i]), _fmt(edges[i + 1]), int(counts[i])] for i in range(len(counts))]
    _write_rows(path, ("bin_left", "bin_right", "count"), rows)


def _write_metrics_csv(path: Path, report: SeedSweepReport) -> None:
    rows = []
    for d, reports in report.per_seed.items():
        for seed, r in zip(report.seeds, reports):
            rows.append(
                [seed, d, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), _fmt(r.roc_auc),
                 _fmt(r.alerts_per_1000), _fmt(r.missed_anomaly_rate)]
            )
    for d in report.per_seed:
        m = report.mean[d]
        rows.append(
            ["mean", d] + [_fmt(m.get(f)) for f in _METRIC_FIELDS]
        )
        if report.sd is not None:
            s = report.sd[d]
            rows.append(["sd", d] + [_fmt(s.get(f)) for f in _METRIC_FIELDS])
        else:
            rows.append(["sd", d] + ["n/a"] * len(_METRIC_FIELDS))
    _write_rows(
        path,
        ("seed", "detector", "precision", "recall", "f1", "roc_auc", "alerts_per_1000", "missed_anomaly_rate"),
        rows,
    )

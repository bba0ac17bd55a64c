"""Shapley attributions for the isolation forest, plus plot-ready exports.

The explained quantity is the negated mean path length over the ensemble
(higher = more anomalous). Per tree, attributions are exact Shapley values of
the conditional-expectation game defined by the tree's recorded subsample
counts; tree attributions average by linearity and are then negated. The
base value is the same expectation taken at the empty coalition, so local
accuracy (base + sum(phi) = output) holds to float precision.

The exponentiated anomaly score is a monotone relabeling of this target:
dividing path-scale attributions by c(psi) and negating preserves every rank
and sign, so summaries read the same either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._treeshap import tree_shap_batch
from .domain import AuditSession, FeatureVector, feature_matrix
from .iforest import FeatureMismatch, IsolationForestModel, IsolationTree

__all__ = [
    "Explanation",
    "GlobalImportance",
    "SummaryPoint",
    "DependencePoint",
    "Narrative",
    "EmptyBackground",
    "explain_instance",
    "explain_matrix",
    "global_importance",
    "summary_data",
    "dependence_data",
    "narrate",
]

TARGET = "negated_mean_path_length"


class EmptyBackground(ValueError):
    """The background dataset for an explanation is empty."""


@dataclass(frozen=True)
class Explanation:
    """Per-feature attributions for one scored session."""

    feature_phis: dict[str, float]
    base_value: float
    model_output: float
    feature_values: dict[str, float]
    target: str = TARGET

    @property
    def residual(self) -> float:
        return self.model_output - self.base_value - sum(self.feature_phis.values())


@dataclass(frozen=True)
class GlobalImportance:
    """Mean absolute attribution per feature, ranked descending."""

    ranking: tuple[tuple[str, float], ...]

    def rank_of(self, name: str) -> int:
        for i, (feature, _) in enumerate(self.ranking):
            if feature == name:
                return i
        raise KeyError(name)

    @property
    def top_feature(self) -> str:
        return self.ranking[0][0]


@dataclass(frozen=True)
class SummaryPoint:
    session_index: int
    feature: str
    phi: float
    feature_value: float


@dataclass(frozen=True)
class DependencePoint:
    primary_feature_value: float
    phi_of_primary: float
    color_feature_value: float


@dataclass(frozen=True)
class Narrative:
    text: str
    reasons: tuple[dict, ...]


def _coerce_matrix(model: IsolationForestModel, data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        X = np.asarray(data, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(model.feature_set):
            raise FeatureMismatch(
                f"expected {len(model.feature_set)} columns, got shape {X.shape}"
            )
        return X
    return feature_matrix(list(data), model.feature_set)


def _tree_base(tree: IsolationTree) -> float:
    leaves = tree.feature < 0
    return float(np.sum(tree.leaf_value[leaves] * tree.size[leaves]) / tree.size[0])


def explain_matrix(
    model: IsolationForestModel, X: np.ndarray
) -> tuple[np.ndarray, float, np.ndarray]:
    """Attributions for every row of a raw feature matrix.

    Returns (phis, base_value, outputs): phis has one row per input row and one
    column per model feature, already on the negated path-length scale.
    """
    X = np.asarray(X, dtype=np.float64)
    Z = model.standardize(X)
    n, m = Z.shape
    phis = np.zeros((n, m), dtype=np.float64)
    base = 0.0
    for tree in model.trees:
        tree_shap_batch(
            tree.feature, tree.threshold, tree.left, tree.right,
            tree.size, tree.leaf_value, Z, phis, tree.height_limit,
        )
        base += _tree_base(tree)
    n_trees = len(model.trees)
    phis /= n_trees
    base /= n_trees
    from .iforest import mean_path_lengths

    outputs = -mean_path_lengths(model, Z)
    return -phis, -base, outputs


def explain_instance(
    model: IsolationForestModel,
    x: FeatureVector,
    background: Sequence[FeatureVector] | np.ndarray,
) -> Explanation:
    """Explain one session's anomaly-score target.

    background is the dataset the explanation is reported against (training
    set by default in callers); it must be non-empty and feature-compatible.
    The conditional expectations themselves come from the per-node subsample
    counts recorded at fit time, which keeps attributions deterministic and
    exactly additive.
    """
    bg = _coerce_matrix(model, background)
    if bg.shape[0] == 0:
        raise EmptyBackground("background dataset is empty")
    row = model.vector_to_row(x)
    phis, base, outputs = explain_matrix(model, row.reshape(1, -1))
    names = model.feature_set.names
    return Explanation(
        feature_phis={name: float(phis[0, j]) for j, name in enumerate(names)},
        base_value=float(base),
        model_output=float(outputs[0]),
        feature_values={name: float(row[j]) for j, name in enumerate(names)},
    )


def global_importance(model: IsolationForestModel, dataset) -> GlobalImportance:
    """Mean |phi| per feature over a dataset, sorted descending.

    Ties break toward feature-set order, so the ranking is stable.
    """
    X = _coerce_matrix(model, dataset)
    if X.shape[0] == 0:
        raise EmptyBackground("dataset is empty")
    phis, _, _ = explain_matrix(model, X)
    means = np.mean(np.abs(phis), axis=0)
    order = sorted(range(len(means)), key=lambda j: (-means[j], j))
    names = model.feature_set.names
    return GlobalImportance(ranking=tuple((names[j], float(means[j])) for j in order))


def summary_data(model: IsolationForestModel, dataset) -> list[SummaryPoint]:
    """One (session, feature) attribution point per cell, with the raw value."""
    X = _coerce_matrix(model, dataset)
    if X.shape[0] == 0:
        raise EmptyBackground("dataset is empty")
    phis, _, _ = explain_matrix(model, X)
    names = model.feature_set.names
    points = []
    for i in range(X.shape[0]):
        for j, name in enumerate(names):
            points.append(
                SummaryPoint(
                    session_index=i,
                    feature=name,
                    phi=float(phis[i, j]),
                    feature_value=float(X[i, j]),
                )
            )
    return points


def dependence_data(
    model: IsolationForestModel, dataset, primary_feature: str, color_feature: str
) -> list[DependencePoint]:
    """Primary feature's attribution against its value, colored by another feature."""
    names = model.feature_set.names
    if primary_feature not in names:
        raise FeatureMismatch(f"unknown feature: {primary_feature}")
    if color_feature not in names:
        raise FeatureMismatch(f"unknown feature: {color_feature}")
    if color_feature == primary_feature:
        raise FeatureMismatch("color feature must differ from primary feature")
    X = _coerce_matrix(model, dataset)
    if X.shape[0] == 0:
        raise EmptyBackground("dataset is empty")
    phis, _, _ = explain_matrix(model, X)
    p = names.index(primary_feature)
    c = names.index(color_feature)
    return [
        DependencePoint(
            primary_feature_value=float(X[i, p]),
            phi_of_primary=float(phis[i, p]),
            color_feature_value=float(X[i, c]),
        )
        for i in range(X.shape[0])
    ]


def narrate(explanation: Explanation, session: AuditSession, top_k: int = 3) -> Narrative:
    """Render an explanation as fixed-template reviewer text."""
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    ranked = sorted(
        explanation.feature_phis.items(),
        key=lambda kv: (-abs(kv[1]), list(explanation.feature_phis).index(kv[0])),
    )
    ranked = [(name, phi) for name, phi in ranked if phi != 0.0][:top_k]
    if not ranked:
        text = f"Session {session.session_id}: no feature materially contributes."
        return Narrative(text=text, reasons=())

    reasons = []
    lines = []
    for name, phi in ranked:
        direction = "anomalous" if phi > 0 else "normal"
        raw = explanation.feature_values.get(name)
        raw_txt = _format_value(raw)
        lines.append(f"{name}={raw_txt} pushes toward {direction} ({phi:+.4f})")
        reasons.append(
            {"feature": name, "phi": phi, "direction": direction, "value": raw}
        )
    text = f"Session {session.session_id}: " + "; ".join(lines) + "."
    return Narrative(text=text, reasons=tuple(reasons))


def _format_value(v: float | None) -> str:
    if v is None:
        return "?"
    if v == int(v):
        return str(int(v))
    return f"{v:.2f}"

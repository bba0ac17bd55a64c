"""Isolation Forest built from the standard definition.

An ensemble of random binary trees, each grown on a without-replacement
subsample: split feature uniform over the node's non-constant columns, split
value uniform strictly inside that column's (min, max). Points isolating in
short paths are anomalous. Path lengths are normalized by c(psi), the average
unsuccessful-search depth of a binary search tree over psi points, and mapped
to a score in (0, 1) via 2**(-E[h]/c(psi)).

Features are z-score standardized with parameters learned from the training
matrix; a constant training column gets a sentinel std of 1.0 and can never be
selected for splitting. The decision threshold is the (1 - contamination)
quantile of the training scores, taken as the smallest training score such
that at most a contamination fraction strictly exceeds it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import digamma

from ._rng import substream
from .domain import DEFAULT_FEATURES, FeatureVector, ModelFeatureSet

__all__ = [
    "IsolationTree",
    "IsolationForestModel",
    "ScoreReport",
    "InsufficientData",
    "InvalidContamination",
    "FeatureMismatch",
    "UnsupportedModelVersion",
    "MalformedModel",
    "average_path_length",
    "fit",
    "score",
    "score_matrix",
    "serialize",
    "deserialize",
]

MODEL_FORMAT = "xpad-iforest"
MODEL_FORMAT_VERSION = 1

_EULER_GAMMA = float(np.euler_gamma)


class InsufficientData(ValueError):
    """Fewer than two training rows."""


class InvalidContamination(ValueError):
    """Contamination outside (0, 0.5]."""


class FeatureMismatch(KeyError):
    """An input does not provide the model's feature set."""


class UnsupportedModelVersion(ValueError):
    """Serialized model uses an unknown format version."""


class MalformedModel(ValueError):
    """Serialized model document is structurally broken."""


def average_path_length(n: int) -> float:
    """c(n): expected unsuccessful-search path length in a BST of n points.

    Exact harmonic values via the digamma identity H(m) = digamma(m+1) + gamma;
    c(1) = 0 and c(2) = 1 by definition.
    """
    if n < 1:
        raise ValueError(f"c(n) requires n >= 1, got {n}")
    if n == 1:
        return 0.0
    if n == 2:
        return 1.0
    harmonic = float(digamma(n)) + _EULER_GAMMA  # H(n - 1)
    return 2.0 * harmonic - 2.0 * (n - 1) / n


def _path_lengths_for_sizes(sizes: np.ndarray) -> np.ndarray:
    return np.array([average_path_length(int(s)) for s in sizes], dtype=np.float64)


@dataclass(frozen=True)
class IsolationTree:
    """One isolation tree in packed-array form; node 0 is the root.

    feature[i] is -1 at external nodes; left/right are -1 there too.
    size[i] is the number of training-subsample points that reached node i
    (the cover), kept for path-length credit and for attribution weights.
    leaf_value[i] = depth(i) + c(size[i]) at external nodes, 0 elsewhere.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    leaf_value: np.ndarray
    height_limit: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass(frozen=True)
class ScoreReport:
    score: float
    mean_path_length: float
    flagged: bool


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsolationTree, ...]
    psi: int
    feature_set: ModelFeatureSet
    means: np.ndarray
    stds: np.ndarray
    contamination: float
    score_threshold: float
    master_seed: int

    @property
    def height_limit(self) -> int:
        return self.trees[0].height_limit

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.means) / self.stds

    def vector_to_row(self, x: FeatureVector) -> np.ndarray:
        try:
            return np.array([x.value(name) for name in self.feature_set.names], dtype=np.float64)
        except KeyError as exc:
            raise FeatureMismatch(f"feature vector missing model feature {exc}") from None


class _TreeBuilder:
    """Grows one tree on a standardized subsample with its own random stream."""

    def __init__(self, X: np.ndarray, rng: np.random.Generator, height_limit: int):
        self.X = X
        self.rng = rng
        self.height_limit = height_limit
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.size: list[int] = []
        self.depth: list[int] = []

    def build(self) -> IsolationTree:
        self._grow(np.arange(len(self.X)), 0)
        sizes = np.asarray(self.size, dtype=np.int64)
        feature = np.asarray(self.feature, dtype=np.int64)
        depths = np.asarray(self.depth, dtype=np.float64)
        leaf_value = np.where(
            feature < 0, depths + _path_lengths_for_sizes(sizes), 0.0
        )
        return IsolationTree(
            feature=feature,
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            size=sizes,
            leaf_value=leaf_value,
            height_limit=self.height_limit,
        )

    def _add_node(self, n_points: int, depth: int) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(n_points)
        self.depth.append(depth)
        return idx

    def _grow(self, points: np.ndarray, depth: int) -> int:
        node = self._add_node(len(points), depth)
        if depth >= self.height_limit or len(points) <= 1:
            return node
        sub = self.X[points]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        eligible = np.flatnonzero(lo < hi)
        if len(eligible) == 0:
            return node  # all columns constant here: duplicated points
        f = int(self.rng.choice(eligible))
        split = float(self.rng.uniform(lo[f], hi[f]))
        if not lo[f] < split < hi[f]:
            split = float(lo[f] + (hi[f] - lo[f]) / 2.0)
        goes_left = sub[:, f] < split
        self.feature[node] = f
        self.threshold[node] = split
        self.left[node] = self._grow(points[goes_left], depth + 1)
        self.right[node] = self._grow(points[~goes_left], depth + 1)
        return node


def fit(
    train_features: np.ndarray,
    n_trees: int = 100,
    psi_mode: str | int = "auto",
    contamination: float = 0.1,
    master_seed: int = 0,
    feature_set: ModelFeatureSet = DEFAULT_FEATURES,
) -> IsolationForestModel:
    """Fit an isolation forest on a feature matrix over feature_set.

    psi_mode "auto" uses min(256, n_train); an integer requests a fixed
    subsample size, capped at n_train.
    """
    X = np.asarray(train_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(feature_set):
        raise FeatureMismatch(
            f"expected matrix with {len(feature_set)} columns, got shape {X.shape}"
        )
    n = X.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least 2 training rows, got {n}")
    if not 0.0 < contamination <= 0.5:
        raise InvalidContamination(f"contamination must be in (0, 0.5], got {contamination}")

    if psi_mode == "auto":
        psi = min(256, n)
    else:
        psi = min(int(psi_mode), n)
        if psi < 2:
            raise ValueError(f"fixed subsample size must be >= 2, got {psi}")
    height_limit = math.ceil(math.log2(psi))

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    Z = (X - means) / stds

    trees = []
    for t in range(n_trees):
        rng = substream(master_seed, "tree", t)
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(_TreeBuilder(Z[idx], rng, height_limit).build())

    model = IsolationForestModel(
        trees=tuple(trees),
        psi=psi,
        feature_set=feature_set,
        means=means,
        stds=stds,
        contamination=contamination,
        score_threshold=0.5,  # placeholder until quantile below
        master_seed=master_seed,
    )
    train_scores, _ = score_matrix(model, X)
    threshold = _contamination_threshold(train_scores, contamination)
    return IsolationForestModel(
        trees=model.trees,
        psi=psi,
        feature_set=feature_set,
        means=means,
        stds=stds,
        contamination=contamination,
        score_threshold=threshold,
        master_seed=master_seed,
    )


def _contamination_threshold(train_scores: np.ndarray, contamination: float) -> float:
    """Smallest training score with at most a contamination fraction above it."""
    n = len(train_scores)
    k = math.ceil(contamination * n)
    return float(np.sort(train_scores)[n - k])


def mean_path_lengths(model: IsolationForestModel, Z: np.ndarray) -> np.ndarray:
    """Mean per-tree path length for each standardized row of Z."""
    from ._treewalk import walk_leaf_values

    total = np.zeros(len(Z), dtype=np.float64)
    for tree in model.trees:
        total += walk_leaf_values(
            tree.feature, tree.threshold, tree.left, tree.right, tree.leaf_value, Z
        )
    return total / len(model.trees)


def score_matrix(model: IsolationForestModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores and mean path lengths for a raw (unstandardized) feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_set):
        raise FeatureMismatch(
            f"expected matrix with {len(model.feature_set)} columns, got shape {X.shape}"
        )
    paths = mean_path_lengths(model, model.standardize(X))
    scores = np.power(2.0, -paths / average_path_length(model.psi))
    return scores, paths


def score(model: IsolationForestModel, x: FeatureVector) -> ScoreReport:
    """Score one feature vector against the fitted forest."""
    row = model.vector_to_row(x)
    scores, paths = score_matrix(model, row.reshape(1, -1))
    s = float(scores[0])
    return ScoreReport(score=s, mean_path_length=float(paths[0]), flagged=s >= model.score_threshold)


def serialize(model: IsolationForestModel) -> str:
    """Serialize to versioned JSON; round-trips to bit-identical scores."""
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "feature_names": list(model.feature_set.names),
        "n_trees": len(model.trees),
        "psi": model.psi,
        "height_limit": model.height_limit,
        "contamination": model.contamination,
        "score_threshold": model.score_threshold,
        "master_seed": model.master_seed,
        "means": model.means.tolist(),
        "stds": model.stds.tolist(),
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "size": tree.size.tolist(),
            }
            for tree in model.trees
        ],
    }
    return json.dumps(doc)


def deserialize(document: str | dict) -> IsolationForestModel:
    """Parse a serialized model; rejects unknown versions and broken structure."""
    if isinstance(document, str):
        if not document.strip():
            raise MalformedModel("empty model document")
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedModel(f"not valid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict) or not doc:
        raise MalformedModel("model document must be a non-empty JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedModelVersion(f"unsupported model format version: {version!r}")
    try:
        feature_set = ModelFeatureSet(tuple(doc["feature_names"]))
        psi = int(doc["psi"])
        height_limit = int(doc["height_limit"])
        trees = []
        for td in doc["trees"]:
            feature = np.asarray(td["feature"], dtype=np.int64)
            size = np.asarray(td["size"], dtype=np.int64)
            depth = _depths_from_structure(
                feature, np.asarray(td["left"], dtype=np.int64), np.asarray(td["right"], dtype=np.int64)
            )
            leaf_value = np.where(feature < 0, depth + _path_lengths_for_sizes(size), 0.0)
            trees.append(
                IsolationTree(
                    feature=feature,
                    threshold=np.asarray(td["threshold"], dtype=np.float64),
                    left=np.asarray(td["left"], dtype=np.int64),
                    right=np.asarray(td["right"], dtype=np.int64),
                    size=size,
                    leaf_value=leaf_value,
                    height_limit=height_limit,
                )
            )
        model = IsolationForestModel(
            trees=tuple(trees),
            psi=psi,
            feature_set=feature_set,
            means=np.asarray(doc["means"], dtype=np.float64),
            stds=np.asarray(doc["stds"], dtype=np.float64),
            contamination=float(doc["contamination"]),
            score_threshold=float(doc["score_threshold"]),
            master_seed=int(doc["master_seed"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise MalformedModel(f"model document missing or malformed field: {exc}") from exc
    if not model.trees:
        raise MalformedModel("model has no trees")
    if len(model.means) != len(feature_set) or len(model.stds) != len(feature_set):
        raise MalformedModel("standardization parameters do not match feature set")
    return model


def _depths_from_structure(feature: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    depth = np.zeros(len(feature), dtype=np.float64)
    stack = [(0, 0)]
    while stack:
        node, d = stack.pop()
        depth[node] = d
        if feature[node] >= 0:
            stack.append((int(left[node]), d + 1))
            stack.append((int(right[node]), d + 1))
    return depth

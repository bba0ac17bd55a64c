"""Transparent rule-based classifier over the contextual features.

Five independent indicators, combined by disjunction: a session is flagged as
soon as any rule fires. Each verdict carries the reason codes of the rules
that fired, so the classifier is its own explanation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Sequence

from .domain import AuditSession, FeatureVector, Role

__all__ = [
    "RuleThresholds",
    "RuleVerdict",
    "Objective",
    "NoPositives",
    "InvalidGrid",
    "classify",
    "tune",
    "REASON_CODES",
]

REASON_CODES = (
    "R1_mismatch_no_referral",
    "R2_post_discharge",
    "R3_off_hours",
    "R4_extreme_duration",
    "R5_rapid_repeat",
)


class NoPositives(ValueError):
    """Training data for tuning contains no positive labels."""


class InvalidGrid(ValueError):
    """A tuning grid dimension is empty or names an unknown threshold."""


@dataclass(frozen=True)
class RuleThresholds:
    """Tunable rule parameters, versioned for change control.

    The off-hours window wraps midnight: start hour inclusive, end hour
    exclusive, so the default [22, 6) covers 22:00-05:59 UTC.
    """

    post_discharge_days_max: float = 14.0
    off_hours_start: int = 22
    off_hours_end: int = 6
    day_shift_roles: frozenset[Role] = frozenset({Role.ADMIN})
    duration_min_sec: float = 30.0
    duration_max_sec: float = 7200.0
    repeat_count_min: int = 3
    version: int = 1
    changed_by: str = ""
    change_reason: str = ""

    def __post_init__(self):
        if self.duration_min_sec >= self.duration_max_sec:
            raise ValueError("duration_min_sec must be < duration_max_sec")
        if self.post_discharge_days_max <= 0:
            raise ValueError("post_discharge_days_max must be > 0")
        if self.repeat_count_min < 2:
            raise ValueError("repeat_count_min must be >= 2")
        for h in (self.off_hours_start, self.off_hours_end):
            if not 0 <= h <= 23:
                raise ValueError(f"off-hours bound out of range: {h}")

    def in_off_hours(self, hour: int) -> bool:
        start, end = self.off_hours_start, self.off_hours_end
        if start == end:
            return False
        if start < end:
            return start <= hour < end
        return hour >= start or hour < end

    def to_json(self) -> dict:
        d = {
            "post_discharge_days_max": self.post_discharge_days_max,
            "off_hours_start": self.off_hours_start,
            "off_hours_end": self.off_hours_end,
            "day_shift_roles": sorted(r.value for r in self.day_shift_roles),
            "duration_min_sec": self.duration_min_sec,
            "duration_max_sec": self.duration_max_sec,
            "repeat_count_min": self.repeat_count_min,
            "version": self.version,
            "changed_by": self.changed_by,
            "change_reason": self.change_reason,
        }
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RuleThresholds":
        return cls(
            post_discharge_days_max=float(d["post_discharge_days_max"]),
            off_hours_start=int(d["off_hours_start"]),
            off_hours_end=int(d["off_hours_end"]),
            day_shift_roles=frozenset(Role(r) for r in d["day_shift_roles"]),
            duration_min_sec=float(d["duration_min_sec"]),
            duration_max_sec=float(d["duration_max_sec"]),
            repeat_count_min=int(d["repeat_count_min"]),
            version=int(d.get("version", 1)),
            changed_by=str(d.get("changed_by", "")),
            change_reason=str(d.get("change_reason", "")),
        )


@dataclass(frozen=True)
class RuleVerdict:
    flagged: bool
    reasons: frozenset[str]

    def __post_init__(self):
        if self.flagged != bool(self.reasons):
            raise ValueError("flagged must hold exactly when reasons is non-empty")
        unknown = self.reasons - set(REASON_CODES)
        if unknown:
            raise ValueError(f"unknown reason codes: {sorted(unknown)}")


def classify(
    session: AuditSession, features: FeatureVector, thresholds: RuleThresholds | None = None
) -> RuleVerdict:
    """Evaluate all five rules against one session; any hit flags it."""
    t = thresholds if thresholds is not None else RuleThresholds()
    reasons = set()

    if features.provider_mismatch == 1 and not session.referral_documented:
        reasons.add("R1_mismatch_no_referral")
    if features.has_discharge and features.days_since_discharge > t.post_discharge_days_max:
        reasons.add("R2_post_discharge")
    if session.role in t.day_shift_roles and t.in_off_hours(features.hour_of_day):
        reasons.add("R3_off_hours")
    if not (t.duration_min_sec <= features.session_duration_sec <= t.duration_max_sec):
        reasons.add("R4_extreme_duration")
    if features.access_count_24h + 1 >= t.repeat_count_min:
        reasons.add("R5_rapid_repeat")

    return RuleVerdict(flagged=bool(reasons), reasons=frozenset(reasons))


# Grid dimensions tune() accepts, in canonical order (also the tie-break order).
_TUNABLE = (
    "post_discharge_days_max",
    "off_hours_start",
    "off_hours_end",
    "day_shift_roles",
    "duration_min_sec",
    "duration_max_sec",
    "repeat_count_min",
)


@dataclass(frozen=True)
class Objective:
    """Tuning objective: plain F1, or max recall subject to a precision floor."""

    kind: str = "f1"
    min_precision: float = 0.0

    @classmethod
    def f1(cls) -> "Objective":
        return cls(kind="f1")

    @classmethod
    def recall_at_precision(cls, p: float) -> "Objective":
        return cls(kind="recall_at_precision", min_precision=p)


def tune(
    train: Sequence[tuple[FeatureVector, AuditSession, bool]],
    grid: dict[str, Sequence],
    objective: Objective | None = None,
    base: RuleThresholds | None = None,
) -> RuleThresholds:
    """Exhaustive grid search over threshold candidates on labeled data.

    grid maps threshold field names to candidate lists; fields not in the grid
    keep their value from base. Ties break toward the lexicographically
    smallest candidate tuple in canonical field order, so the search is
    deterministic regardless of grid ordering.
    """
    if objective is None:
        objective = Objective.f1()
    base = base if base is not None else RuleThresholds()
    if not train:
        raise NoPositives("training data is empty")
    labels = [bool(lab) for _, _, lab in train]
    if not any(labels):
        raise NoPositives("training data contains no positive labels")

    for name, candidates in grid.items():
        if name not in _TUNABLE:
            raise InvalidGrid(f"unknown threshold field: {name}")
        if len(candidates) == 0:
            raise InvalidGrid(f"empty candidate list for {name}")

    dims = [name for name in _TUNABLE if name in grid]
    candidate_lists = [sorted(grid[name], key=_grid_key) for name in dims]

    best: tuple | None = None
    best_thresholds = None
    for combo in itertools.product(*candidate_lists):
        try:
            cand = replace(base, **dict(zip(dims, combo)))
        except ValueError:
            continue  # inconsistent combination, e.g. min >= max
        score = _objective_score(cand, train, labels, objective)
        key = (score, tuple(-_order_key(v) for v in combo))
        if best is None or key > best:
            best = key
            best_thresholds = cand
    if best_thresholds is None:
        raise InvalidGrid("no valid threshold combination in grid")
    return best_thresholds


def _grid_key(v):
    if isinstance(v, frozenset) or isinstance(v, set):
        return tuple(sorted(r.value for r in v))
    return v


def _order_key(v) -> float:
    if isinstance(v, (frozenset, set)):
        return float(len(v))
    return float(v)


def _objective_score(
    thresholds: RuleThresholds,
    train: Sequence[tuple[FeatureVector, AuditSession, bool]],
    labels: Sequence[bool],
    objective: Objective,
) -> tuple:
    tp = fp = fn = 0
    for (fv, session, _), label in zip(train, labels):
        pred = classify(session, fv, thresholds).flagged
        if pred and label:
            tp += 1
        elif pred:
            fp += 1
        elif label:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if objective.kind == "f1":
        return (f1,)
    if objective.kind == "recall_at_precision":
        feasible = precision >= objective.min_precision
        # infeasible candidates rank below all feasible ones, by precision
        return (1 if feasible else 0, recall if feasible else precision)
    raise ValueError(f"unknown objective kind: {objective.kind}")

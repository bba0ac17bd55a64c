"""Deterministic synthetic health-information-exchange audit-log generator.

Produces session logs for a hypothetical exchange of eight providers sharing
one record system, with five misuse templates injected at exact counts:

  T1  cross-provider access without a documented referral
  T2  post-discharge access beyond the allowed interval
  T3  off-hours access by a day-shift role
  T4  extreme session duration (very long or very short)
  T5  rapid repeated access to one record by one user

Full-strength injections strictly exceed the default rule thresholds; the
attenuated variants sit just inside them, so threshold rules cannot see them.
Benign traffic is drawn from skewed, day-peaked distributions and crosses a
rule boundary only through an explicit boundary-rate coin, which is what
calibrates rule precision. Every anomaly gets a user-patient pair of its own,
and benign sampling rejects any placement that would put three same-pair
sessions inside 24 hours, so repeat counts stay under the rule's radar except
where a T5 burst puts them over deliberately.

Generation is a pure function of the profile: all randomness comes from named
substreams of the profile seed, so one profile always yields one byte-exact
CSV. The byte-level contract holds within this implementation, not across
reimplementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._rng import substream
from .domain import AuditSession, EventType, Role, ShiftType, batch_derive

__all__ = [
    "GeneratorProfile",
    "Dataset",
    "InvalidProfile",
    "InvalidTemplate",
    "GenerationError",
    "TEMPLATES",
    "CSV_COLUMNS",
    "CSV_NOISE_COLUMNS",
    "generate",
    "inject_anomaly",
    "generation_context",
    "export_csv",
    "data_dictionary",
]

TEMPLATES = ("T1", "T2", "T3", "T4", "T5")

# Simulated horizon: 30 days ending at a fixed instant, so golden files are stable.
HORIZON_END = int(datetime(2024, 7, 1, tzinfo=timezone.utc).timestamp())
HORIZON_DAYS = 30
HORIZON_START = HORIZON_END - HORIZON_DAYS * 86400

DEPARTMENTS = ("Cardiology", "Oncology", "Emergency", "Radiology", "Pediatrics", "GeneralMedicine")

CSV_COLUMNS = (
    "session_id",
    "user_id",
    "role",
    "provider_id",
    "patient_id",
    "primary_provider_id",
    "event_type",
    "event_timestamp",
    "session_duration_sec",
    "discharge_timestamp",
    "referral_documented",
    "days_since_discharge",
    "hour_of_day",
    "day_of_week",
    "access_count_24h",
    "access_count_past_week",
    "is_anomaly",
)
CSV_NOISE_COLUMNS = ("department", "shift_type", "multi_patient_session")


class InvalidProfile(ValueError):
    """Profile parameters are inconsistent or ungeneratable."""


class InvalidTemplate(ValueError):
    """Unknown anomaly template identifier."""


class GenerationError(RuntimeError):
    """The sampler could not place a session under the profile's constraints."""


@dataclass(frozen=True)
class GeneratorProfile:
    name: str = "refined"
    n_sessions: int = 500
    n_anomalies: int = 99
    n_providers: int = 8
    n_users: int = 60
    n_patients: int = 200
    role_mix: tuple[float, float, float] = (0.40, 0.45, 0.15)
    benign_cross_provider_rate: float = 0.06
    benign_boundary_rate: float = 0.045
    template_mix: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)
    attenuated_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.name not in ("refined", "complex"):
            raise InvalidProfile(f"unknown profile name: {self.name!r}")
        for label, v in (
            ("n_sessions", self.n_sessions),
            ("n_anomalies", self.n_anomalies),
            ("n_providers", self.n_providers),
            ("n_users", self.n_users),
            ("n_patients", self.n_patients),
        ):
            if v <= 0:
                raise InvalidProfile(f"{label} must be positive, got {v}")
        if self.n_anomalies >= self.n_sessions:
            raise InvalidProfile("n_anomalies must be smaller than n_sessions")
        if abs(sum(self.role_mix) - 1.0) > 1e-9:
            raise InvalidProfile(f"role_mix must sum to 1, got {sum(self.role_mix)}")
        if any(w < 0 for w in self.template_mix) or sum(self.template_mix) <= 0:
            raise InvalidProfile("template_mix must be non-negative and not all zero")
        if not 0.0 <= self.attenuated_fraction <= 1.0:
            raise InvalidProfile("attenuated_fraction must be in [0, 1]")
        if not 0.0 <= self.benign_cross_provider_rate <= 1.0:
            raise InvalidProfile("benign_cross_provider_rate must be a probability")
        if not 0.0 <= self.benign_boundary_rate <= 1.0:
            raise InvalidProfile("benign_boundary_rate must be a probability")

    @property
    def has_noise_fields(self) -> bool:
        return self.name == "complex"

    @classmethod
    def preset(cls, name: str, seed: int, **overrides) -> "GeneratorProfile":
        """Named defaults: refined (500/99, lean) or complex (1000/200, noisy)."""
        if name == "refined":
            base = cls(name="refined", seed=seed)
        elif name == "complex":
            base = cls(
                name="complex",
                n_sessions=1000,
                n_anomalies=200,
                benign_cross_provider_rate=0.15,
                attenuated_fraction=0.5,
                seed=seed,
            )
        else:
            raise InvalidProfile(f"unknown profile name: {name!r}")
        return replace(base, **overrides) if overrides else base

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n_sessions": self.n_sessions,
            "n_anomalies": self.n_anomalies,
            "n_providers": self.n_providers,
            "n_users": self.n_users,
            "n_patients": self.n_patients,
            "role_mix": list(self.role_mix),
            "benign_cross_provider_rate": self.benign_cross_provider_rate,
            "benign_boundary_rate": self.benign_boundary_rate,
            "template_mix": list(self.template_mix),
            "attenuated_fraction": self.attenuated_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorProfile":
        kwargs = dict(d)
        if "role_mix" in kwargs:
            kwargs["role_mix"] = tuple(kwargs["role_mix"])
        if "template_mix" in kwargs:
            kwargs["template_mix"] = tuple(kwargs["template_mix"])
        return cls(**kwargs)


@dataclass(frozen=True)
class Dataset:
    profile: GeneratorProfile
    sessions: tuple[AuditSession, ...]
    train_index: tuple[int, ...]
    test_index: tuple[int, ...]


def _apportion(total: int, weights) -> list[int]:
    """Largest-remainder apportionment; deterministic, sums to total."""
    wsum = float(sum(weights))
    shares = [total * w / wsum for w in weights]
    base = [math.floor(s) for s in shares]
    rest = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(shares[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


@dataclass
class _User:
    user_id: str
    role: Role
    provider: int


class _PairTracker:
    """Times of every placed session per user-patient pair, in epoch seconds."""

    def __init__(self):
        self.times: dict[tuple[int, int], list[int]] = {}

    def would_cluster(self, pair: tuple[int, int], t: int) -> bool:
        # keep benign pairs to at most 2 sessions per rolling week, so neither
        # the 24h repeat rule nor the week-window count ever looks bursty
        near = [x for x in self.times.get(pair, ()) if abs(x - t) <= 7 * 86400]
        return len(near) >= 2

    def add(self, pair: tuple[int, int], t: int) -> None:
        self.times.setdefault(pair, []).append(t)

    def used(self, pair: tuple[int, int]) -> bool:
        return pair in self.times


class _GenState:
    """Entities, random streams, and placement bookkeeping for one generate call."""

    def __init__(self, profile: GeneratorProfile):
        self.profile = profile
        p = profile
        self.users = self._make_users(p)
        self.patient_provider = [i % p.n_providers for i in range(p.n_patients)]
        self.patients_by_provider: dict[int, list[int]] = {}
        for pat, prov in enumerate(self.patient_provider):
            self.patients_by_provider.setdefault(prov, []).append(pat)
        if p.n_providers >= 2 and any(not self.patients_by_provider.get(i) for i in range(p.n_providers)):
            raise InvalidProfile("every provider needs at least one patient")
        self.pairs = _PairTracker()
        self.rng_benign = substream(p.seed, "benign")
        self.rng_anomaly = substream(p.seed, "anomaly")
        self.rng_noise = substream(p.seed, "noise")
        self.admin_users = [i for i, u in enumerate(self.users) if u.role is Role.ADMIN]
        # benign sessions eligible for one follow-up visit: (user, patient, t, cross)
        self.revisit_anchors: list[tuple[int, int, int, bool]] = []
        self.session_counter = 0

    @staticmethod
    def _make_users(p: GeneratorProfile) -> list[_User]:
        counts = _apportion(p.n_users, p.role_mix)
        roles = (
            [Role.PHYSICIAN] * counts[0] + [Role.NURSE] * counts[1] + [Role.ADMIN] * counts[2]
        )
        return [
            _User(user_id=f"U{i + 1:03d}", role=roles[i], provider=i % p.n_providers)
            for i in range(p.n_users)
        ]

    def provider_id(self, idx: int) -> str:
        return f"P{idx + 1:02d}"

    def patient_id(self, idx: int) -> str:
        return f"PT{idx + 1:04d}"

    # -- sampling helpers ---------------------------------------------------

    def pick_user(self, rng, roles: tuple[Role, ...] | None = None) -> int:
        if roles is None:
            return int(rng.integers(0, len(self.users)))
        pool = [i for i, u in enumerate(self.users) if u.role in roles]
        if not pool:
            wanted = "/".join(r.value for r in roles)
            raise InvalidProfile(f"profile produces no users with role {wanted}")
        return pool[int(rng.integers(0, len(pool)))]

    def pick_patient(self, rng, provider: int, cross: bool) -> int:
        if cross:
            pool = [i for i in range(self.profile.n_patients) if self.patient_provider[i] != provider]
            if not pool:
                raise InvalidProfile("cross-provider sampling needs at least 2 providers with patients")
            return pool[int(rng.integers(0, len(pool)))]
        pool = self.patients_by_provider.get(provider, [])
        if not pool:
            raise GenerationError(f"provider {provider} has no patients")
        return pool[int(rng.integers(0, len(pool)))]

    def draw_hour(self, rng, role: Role) -> int:
        """Day-peaked mixture; day-shift roles never land in default off-hours."""
        for _ in range(1000):
            if rng.random() < 0.75:
                h = int(round(rng.normal(13.0, 3.0))) % 24
            else:
                h = int(rng.integers(0, 24))
            if role is Role.ADMIN and (h >= 22 or h < 6):
                continue
            return h
        raise GenerationError("could not draw an in-shift hour")

    def draw_day_hour(self, rng) -> int:
        """Business-hours draw for coordinated or single-quirk sessions."""
        for _ in range(1000):
            h = int(round(rng.normal(13.0, 3.0))) % 24
            if 6 <= h < 22:
                return h
        raise GenerationError("could not draw a daytime hour")

    def draw_timestamp(self, rng, role: Role, hour: int | None = None) -> int:
        day = int(rng.integers(0, HORIZON_DAYS))
        h = self.draw_hour(rng, role) if hour is None else hour
        minute = int(rng.integers(0, 60))
        second = int(rng.integers(0, 60))
        return HORIZON_START + day * 86400 + h * 3600 + minute * 60 + second

    def draw_duration(self, rng, lo: int = 10, hi: int = 14400) -> int:
        d = int(round(rng.lognormal(math.log(300.0), 0.8)))
        return max(lo, min(hi, d))

    def draw_benign_days_seconds(self, rng) -> int:
        """Signed seconds since discharge: 60% in-stay/at-discharge, 40% recent tail."""
        if rng.random() < 0.6:
            return int(rng.integers(-5 * 86400, 1 * 86400 + 1))
        d = rng.exponential(4.0) * 86400
        return min(int(round(d)), 14 * 86400)

    def draw_event_type(self, rng) -> EventType:
        x = rng.random()
        if x < 0.70:
            return EventType.VIEW
        if x < 0.95:
            return EventType.MODIFY
        return EventType.DISCHARGE

    def place_pair_time(self, rng, user: int, cross: bool, role: Role) -> tuple[int, int]:
        """Pick (patient, time) for a benign session without creating a repeat cluster."""
        provider = self.users[user].provider
        for _ in range(1000):
            patient = self.pick_patient(rng, provider, cross)
            t = self.draw_timestamp(rng, role)
            if not self.pairs.would_cluster((user, patient), t):
                return patient, t
        raise GenerationError("could not place a benign session without clustering")

    def fresh_pair(self, rng, cross: bool, roles: tuple[Role, ...] | None = None) -> tuple[int, int]:
        """Reserve a user-patient pair for an injected anomaly.

        Prefers pairs no other session uses; extreme profiles that exhaust the
        unused pool fall back to reuse rather than failing the whole run.
        """
        user = patient = 0
        for attempt in range(301):
            user = self.pick_user(rng, roles)
            provider = self.users[user].provider
            patient = self.pick_patient(rng, provider, cross)
            if attempt == 300 or not self.pairs.used((user, patient)):
                break
        return user, patient

    def noise_fields(self, hour: int) -> dict:
        if not self.profile.has_noise_fields:
            return {"department": None, "shift_type": None, "multi_patient_session": None}
        rng = self.rng_noise
        if 6 <= hour < 14:
            shift = ShiftType.DAY
        elif 14 <= hour < 22:
            shift = ShiftType.EVENING
        else:
            shift = ShiftType.NIGHT
        return {
            "department": DEPARTMENTS[int(rng.integers(0, len(DEPARTMENTS)))],
            "shift_type": shift,
            "multi_patient_session": bool(rng.random() < 0.07),
        }


@dataclass
class _Draft:
    """A session before ids are assigned (ordering happens at the end)."""

    order: int
    user: int
    patient: int
    t: int
    duration: int
    discharge_t: int | None
    referral: bool
    event_type: EventType
    is_anomaly: bool
    template: str | None


def generation_context(profile: GeneratorProfile) -> _GenState:
    """Build the generator state used by inject_anomaly; exposed for sampling studies."""
    return _GenState(profile)


def _nominal_draft(state: _GenState, rng, user: int, patient: int, t: int) -> _Draft:
    """A session with every dimension inside the default rule envelope."""
    days = state.draw_benign_days_seconds(rng)
    return _Draft(
        order=-1,
        user=user,
        patient=patient,
        t=t,
        duration=state.draw_duration(rng, lo=30, hi=7200),
        discharge_t=t - days,
        referral=False,
        event_type=state.draw_event_type(rng),
        is_anomaly=False,
        template=None,
    )


def _inject_drafts(template: str, attenuated: bool, context: _GenState) -> list[_Draft]:
    """Create one injected anomaly (a burst for T5) as draft sessions.

    Full-strength drafts strictly cross the matching default rule threshold;
    attenuated drafts stay in the sub-threshold band and fire no rule at all.
    """
    if template not in TEMPLATES:
        raise InvalidTemplate(f"unknown template: {template!r}")
    state = context
    rng = state.rng_anomaly

    if template == "T5":
        return _inject_burst(state, rng, attenuated)

    if template == "T1":
        user, patient = state.fresh_pair(rng, cross=True)
        if attenuated:
            t = state.draw_timestamp(rng, state.users[user].role)
        else:
            # unreferred crossings are uncoordinated: any hour of the day
            t = state.draw_timestamp(rng, state.users[user].role, hour=int(rng.integers(0, 24)))
        d = _nominal_draft(state, rng, user, patient, t)
        d.referral = attenuated  # a documented referral hides the crossing from R1
    elif template == "T2":
        user, patient = state.fresh_pair(rng, cross=False)
        t = state.draw_timestamp(rng, state.users[user].role)
        d = _nominal_draft(state, rng, user, patient, t)
        if attenuated:
            days_sec = int(rng.integers(10 * 86400 + 1, 14 * 86400 + 1))
        else:
            days_sec = int(rng.integers(14 * 86400 + 1, 60 * 86400 + 1))
        d.discharge_t = t - days_sec
    elif template == "T3":
        user, patient = state.fresh_pair(rng, cross=False, roles=(Role.ADMIN,))
        if attenuated:
            hour = int(rng.choice([20, 21]))
        else:
            hour = int(rng.choice([22, 23, 0, 1, 2, 3, 4, 5]))
        t = state.draw_timestamp(rng, Role.ADMIN, hour=hour)
        d = _nominal_draft(state, rng, user, patient, t)
    elif template == "T4":
        user, patient = state.fresh_pair(rng, cross=False)
        t = state.draw_timestamp(rng, state.users[user].role)
        d = _nominal_draft(state, rng, user, patient, t)
        long_side = rng.random() < 0.5
        if attenuated:
            d.duration = int(rng.integers(5400, 7200 + 1)) if long_side else int(rng.integers(30, 61))
        else:
            # well past the envelope, clear of benign boundary drift
            d.duration = int(rng.integers(10800, 28800 + 1)) if long_side else int(rng.integers(5, 16))
    else:  # pragma: no cover
        raise InvalidTemplate(template)

    d.is_anomaly = True
    d.template = template
    state.pairs.add((d.user, d.patient), d.t)
    return [d]


def _inject_burst(state: _GenState, rng, attenuated: bool, labeled: int | None = None) -> list[_Draft]:
    """T5: same-pair sessions packed inside 24h.

    Full strength prepends two benign lead-in accesses, so every labeled burst
    member already has at least two prior same-pair sessions in its trailing
    24h window and the repeat rule fires on each. Attenuated bursts are pairs
    (or a single) that stay under the repeat threshold.
    """
    if labeled is None:
        labeled = 2 if attenuated else 3
    # burst users come from roles with no off-hours restriction, so the burst
    # trips only the repeat rule regardless of when in the day it lands
    user, patient = state.fresh_pair(rng, cross=False, roles=(Role.PHYSICIAN, Role.NURSE))
    n_leadin = 0 if attenuated else 2
    total = n_leadin + labeled

    gaps = [int(rng.integers(15 * 60, 120 * 60)) for _ in range(total - 1)]
    span = sum(gaps)
    day = int(rng.integers(0, HORIZON_DAYS - 1))
    start_in_day = int(rng.integers(0, 86400 - 1))
    t0 = HORIZON_START + day * 86400 + start_in_day
    if t0 + span >= HORIZON_END:
        t0 = HORIZON_END - span - 1

    drafts = []
    t = t0
    for i in range(total):
        d = _nominal_draft(state, rng, user, patient, t)
        if i >= n_leadin:
            d.is_anomaly = True
            d.template = "T5"
        drafts.append(d)
        state.pairs.add((user, patient), t)
        if i < total - 1:
            t += gaps[i]
    return drafts


def _draft_to_session(state: _GenState, d: _Draft, session_id: str) -> AuditSession:
    user = state.users[d.user]
    t = datetime.fromtimestamp(d.t, tz=timezone.utc)
    noise = state.noise_fields(t.hour)
    return AuditSession(
        session_id=session_id,
        user_id=user.user_id,
        role=user.role,
        provider_id=state.provider_id(user.provider),
        patient_id=state.patient_id(d.patient),
        primary_provider_id=state.provider_id(state.patient_provider[d.patient]),
        event_type=d.event_type,
        event_timestamp=t,
        session_duration_sec=d.duration,
        discharge_timestamp=(
            datetime.fromtimestamp(d.discharge_t, tz=timezone.utc)
            if d.discharge_t is not None
            else None
        ),
        referral_documented=d.referral,
        department=noise["department"],
        shift_type=noise["shift_type"],
        multi_patient_session=noise["multi_patient_session"],
        is_anomaly=d.is_anomaly,
        anomaly_template=d.template,
    )


def inject_anomaly(template: str, attenuated: bool, context: _GenState) -> list[AuditSession]:
    """Inject one anomaly into the context; returns its sessions in time order.

    Single session for T1-T4; for T5 a same-pair burst, including the benign
    lead-in accesses that precede a full-strength burst.
    """
    drafts = _inject_drafts(template, attenuated, context)
    sessions = []
    for d in sorted(drafts, key=lambda x: x.t):
        context.session_counter += 1
        sessions.append(_draft_to_session(context, d, f"INJ{context.session_counter:06d}"))
    return sessions


def _benign_draft(state: _GenState) -> _Draft:
    rng = state.rng_benign
    p = state.profile
    user = state.pick_user(rng)
    role = state.users[user].role
    cross = rng.random() < p.benign_cross_provider_rate

    boundary = rng.random() < p.benign_boundary_rate
    if not boundary and rng.random() < 0.12 and state.revisit_anchors:
        # follow-up visit to a recently accessed record: same pair, later in
        # the same week, still clear of the rapid-repeat rule
        idx = int(rng.integers(0, len(state.revisit_anchors)))
        a_user, a_patient, a_t, a_cross = state.revisit_anchors[idx]
        t = a_t + int(rng.integers(4 * 3600, 7 * 86400))
        if t < HORIZON_END and not state.pairs.would_cluster((a_user, a_patient), t):
            del state.revisit_anchors[idx]
            days = state.draw_benign_days_seconds(rng)
            state.pairs.add((a_user, a_patient), t)
            return _Draft(
                order=-1,
                user=a_user,
                patient=a_patient,
                t=t,
                duration=state.draw_duration(rng),
                discharge_t=t - days,
                referral=a_cross,
                event_type=state.draw_event_type(rng),
                is_anomaly=False,
                template=None,
            )

    mechanism = None
    if boundary:
        cross = False  # boundary sessions cross exactly one rule edge, nothing else
        u = rng.random()
        if role is Role.ADMIN:
            mechanism = "short_duration" if u < 0.55 else ("long_duration" if u < 0.80 else "off_hours_edge")
        else:
            mechanism = "short_duration" if u < 0.70 else "long_duration"

    if mechanism == "off_hours_edge":
        day = int(rng.integers(0, HORIZON_DAYS))
        minute = int(rng.integers(0, 30))
        t = HORIZON_START + day * 86400 + 22 * 3600 + minute * 60 + int(rng.integers(0, 60))
        patient = None
        for _ in range(1000):
            cand = state.pick_patient(rng, state.users[user].provider, cross)
            if not state.pairs.would_cluster((user, cand), t):
                patient = cand
                break
        if patient is None:
            raise GenerationError("could not place an off-hours boundary session")
    elif mechanism is not None or cross:
        # referred crossings are coordinated and duration quirks stand alone:
        # both stay on the daytime clock
        provider = state.users[user].provider
        patient = None
        for _ in range(1000):
            cand = state.pick_patient(rng, provider, cross)
            t = state.draw_timestamp(rng, role, hour=state.draw_day_hour(rng))
            if not state.pairs.would_cluster((user, cand), t):
                patient = cand
                break
        if patient is None:
            raise GenerationError("could not place a benign session without clustering")
    else:
        patient, t = state.place_pair_time(rng, user, cross, role)

    duration = state.draw_duration(rng)
    if mechanism == "long_duration":
        duration = int(rng.integers(7201, 8000 + 1))
    elif mechanism == "short_duration":
        duration = int(rng.integers(20, 30))

    days = state.draw_benign_days_seconds(rng)
    state.pairs.add((user, patient), t)
    if mechanism is None and not cross:
        # cross-provider pairs never anchor a follow-up: repeated crossings
        # are a misuse signature, not benign texture
        state.revisit_anchors.append((user, patient, t, cross))
    return _Draft(
        order=-1,
        user=user,
        patient=patient,
        t=t,
        duration=duration,
        discharge_t=t - days,
        referral=cross,
        event_type=state.draw_event_type(rng),
        is_anomaly=False,
        template=None,
    )


def generate(profile: GeneratorProfile) -> Dataset:
    """Generate the full dataset for a profile, including its 80/20 split."""
    state = _GenState(profile)
    p = profile

    per_template = _apportion(p.n_anomalies, p.template_mix)
    n_attenuated = round(p.attenuated_fraction * p.n_anomalies)
    att_per_template = _apportion(n_attenuated, [k or 0 for k in per_template]) if n_attenuated else [0] * 5
    for k, a in zip(per_template, att_per_template):
        if a > k:
            raise InvalidProfile("attenuated share exceeds a template's allocation")

    drafts: list[_Draft] = []
    n_leadins = 0
    for ti, template in enumerate(TEMPLATES):
        full = per_template[ti] - att_per_template[ti]
        att = att_per_template[ti]
        if template == "T5":
            for size in _burst_sizes(full, full_strength=True):
                burst = _inject_burst(state, state.rng_anomaly, attenuated=False, labeled=size)
                n_leadins += sum(1 for d in burst if not d.is_anomaly)
                drafts.extend(burst)
            for size in _burst_sizes(att, full_strength=False):
                drafts.extend(_inject_burst(state, state.rng_anomaly, attenuated=True, labeled=size))
        else:
            for _ in range(full):
                drafts.extend(_inject_drafts(template, False, state))
            for _ in range(att):
                drafts.extend(_inject_drafts(template, True, state))

    n_regular = p.n_sessions - p.n_anomalies - n_leadins
    if n_regular < 0:
        raise InvalidProfile("profile leaves no room for benign sessions after burst lead-ins")
    for _ in range(n_regular):
        drafts.append(_benign_draft(state))

    for i, d in enumerate(drafts):
        d.order = i
    drafts.sort(key=lambda d: (d.t, d.order))

    sessions = [
        _draft_to_session(state, d, f"S{i + 1:05d}") for i, d in enumerate(drafts)
    ]

    assert sum(s.is_anomaly for s in sessions) == p.n_anomalies
    assert len(sessions) == p.n_sessions

    train_index, test_index = _split(sessions, p)
    return Dataset(
        profile=profile,
        sessions=tuple(sessions),
        train_index=train_index,
        test_index=test_index,
    )


def _burst_sizes(total: int, full_strength: bool) -> list[int]:
    """Decompose a T5 allocation into burst sizes (>=3 full, <=2 attenuated)."""
    if total <= 0:
        return []
    if full_strength:
        if total < 3:
            return [total]
        n = total // 3
        sizes = [3] * n
        for i in range(total - 3 * n):
            sizes[i % n] += 1
        return sizes
    sizes = [2] * (total // 2)
    if total % 2:
        sizes.append(1)
    return sizes


def _split(sessions, profile: GeneratorProfile) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Stratified, seeded 80/20 split: train/test anomaly rates match."""
    rng = substream(profile.seed, "split")
    anom = [i for i, s in enumerate(sessions) if s.is_anomaly]
    benign = [i for i, s in enumerate(sessions) if not s.is_anomaly]
    anom = [anom[i] for i in rng.permutation(len(anom))]
    benign = [benign[i] for i in rng.permutation(len(benign))]

    n_train = round(0.8 * profile.n_sessions)
    n_anom_train = round(0.8 * profile.n_anomalies)
    train = sorted(anom[:n_anom_train] + benign[: n_train - n_anom_train])
    test = sorted(anom[n_anom_train:] + benign[n_train - n_anom_train :])
    return tuple(train), tuple(test)


# -- export / import ----------------------------------------------------------


def _iso(ts: datetime | None) -> str:
    if ts is None:
        return ""
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_iso(s: str) -> datetime | None:
    if not s:
        return None
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def load_csv(path) -> tuple[list[AuditSession], list[bool]]:
    """Read an exported dataset back as sessions plus ground-truth labels.

    The CSV does not carry injection templates, so sessions come back
    unlabeled and the anomaly column is returned separately. Derived columns
    are ignored; features are recomputed downstream.
    """
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[: len(CSV_COLUMNS)]) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header in {path}")
        has_noise = tuple(header) == CSV_COLUMNS + CSV_NOISE_COLUMNS
        sessions = []
        labels = []
        for row in reader:
            rec = dict(zip(header, row))
            sessions.append(
                AuditSession(
                    session_id=rec["session_id"],
                    user_id=rec["user_id"],
                    role=Role(rec["role"]),
                    provider_id=rec["provider_id"],
                    patient_id=rec["patient_id"],
                    primary_provider_id=rec["primary_provider_id"],
                    event_type=EventType(rec["event_type"]),
                    event_timestamp=_parse_iso(rec["event_timestamp"]),
                    session_duration_sec=int(rec["session_duration_sec"]),
                    discharge_timestamp=_parse_iso(rec["discharge_timestamp"]),
                    referral_documented=rec["referral_documented"] == "1",
                    department=(rec.get("department") or None) if has_noise else None,
                    shift_type=ShiftType(rec["shift_type"]) if has_noise and rec.get("shift_type") else None,
                    multi_patient_session=(
                        rec["multi_patient_session"] == "1"
                        if has_noise and rec.get("multi_patient_session") != ""
                        else None
                    ),
                )
            )
            labels.append(rec["is_anomaly"] == "1")
    return sessions, labels


def export_csv(dataset: Dataset, path) -> Path:
    """Write the dataset with derived fields in the fixed column order."""
    import csv

    path = Path(path)
    noise = dataset.profile.has_noise_fields
    columns = CSV_COLUMNS + CSV_NOISE_COLUMNS if noise else CSV_COLUMNS
    derived = batch_derive(dataset.sessions)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for session, fv in derived:
            row = [
                session.session_id,
                session.user_id,
                session.role.value,
                session.provider_id,
                session.patient_id,
                session.primary_provider_id,
                session.event_type.value,
                _iso(session.event_timestamp),
                session.session_duration_sec,
                _iso(session.discharge_timestamp),
                int(session.referral_documented),
                repr(fv.days_since_discharge) if session.discharge_timestamp else "",
                fv.hour_of_day,
                fv.day_of_week,
                fv.access_count_24h,
                fv.access_count_past_week,
                int(session.is_anomaly),
            ]
            if noise:
                row.extend(
                    [
                        session.department or "",
                        session.shift_type.value if session.shift_type else "",
                        "" if session.multi_patient_session is None else int(session.multi_patient_session),
                    ]
                )
            writer.writerow(row)
    return path


def data_dictionary(profile: GeneratorProfile) -> dict:
    """Machine-readable description of every exported column."""
    entries = [
        _col("session_id", "string", "Unique session identifier, assigned in timestamp order."),
        _col("user_id", "string", "Anonymised accessing user."),
        _col("role", "categorical", "Accessing user's role.", coding=[r.value for r in Role]),
        _col("provider_id", "string", "Organisation through which the access happened."),
        _col("patient_id", "string", "Anonymised patient whose record was accessed."),
        _col("primary_provider_id", "string", "Patient's home provider."),
        _col("event_type", "categorical", "Action taken in the session.", coding=[e.value for e in EventType]),
        _col("event_timestamp", "timestamp", "Session start, ISO-8601 UTC seconds.", tz="UTC"),
        _col("session_duration_sec", "integer", "Session length in seconds.", units="seconds",
             generation="lognormal(median 300s, sigma 0.8), clipped to [10, 14400]"),
        _col("discharge_timestamp", "timestamp", "Most recent discharge on record; empty if none.", tz="UTC"),
        _col("referral_documented", "boolean", "Referral marker for cross-provider accesses.", coding=["0", "1"]),
        _col("days_since_discharge", "real", "Signed days between discharge and access; negative while in stay.",
             units="days", range="[-365, 365]"),
        _col("hour_of_day", "integer", "Hour of access on the UTC clock.", range="0-23", tz="UTC"),
        _col("day_of_week", "integer", "Weekday of access, Monday = 0.", range="0-6", tz="UTC"),
        _col("access_count_24h", "integer", "Prior same user-patient sessions in the trailing 24h."),
        _col("access_count_past_week", "integer", "Prior same user-patient sessions in the trailing 7 days."),
        _col("is_anomaly", "boolean", "Injected-misuse ground truth label.", coding=["0", "1"]),
    ]
    if profile.has_noise_fields:
        entries.extend(
            [
                _col("department", "categorical", "Accessing department (noise field).", coding=list(DEPARTMENTS)),
                _col("shift_type", "categorical", "Shift bucket of the access hour (noise field).",
                     coding=[s.value for s in ShiftType]),
                _col("multi_patient_session", "boolean", "Whether the user touched several records in one sitting (noise field).",
                     coding=["0", "1"]),
            ]
        )
    return {
        "profile": profile.name,
        "n_columns": len(entries),
        "columns": entries,
    }


def _col(name, type_, description, units=None, coding=None, range=None, tz=None, generation=None):
    entry = {"name": name, "type": type_, "description": description}
    if units:
        entry["units"] = units
    if coding:
        entry["coding"] = coding
    if range:
        entry["range"] = range
    if tz:
        entry["tz"] = tz
    if generation:
        entry["generation"] = generation
    return entry

"""Synthetic residents whose routine regularity tracks a synthetic cognition score.

This is a test corpus, not a physiological model: lower scores map linearly
to larger anchor-time jitter and more random room excursions.

Each generated day is a sequence of stays. The emitted sensor stream is built
so that ingest reconstructs exactly those stays:

* every indoor stay starts with a PIR firing at its first second, and all
  firings of a stay end before the stay does;
* an outside stay ``[a, b)`` is preceded by an entrance stay whose firings
  end by ``a - quiet_period``, where the entrance door fires; the return
  door event fires at ``b - 2`` and motion resumes at ``b``.

All times are multiples of 2 s (0.5 Hz sampling).
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import DataError
from .ingest import (
    DAY_SECONDS,
    DEFAULT_QUIET_PERIOD,
    INDOOR,
    LOCATIONS,
    DayTimeline,
    SensorEvent,
    merge_segments,
)

TICK = 2
MIN_STAY = 120
EXCURSION_MEAN = 900.0
EXCURSION_RANGE = (120.0, 7200.0)
BURST_MEAN = 90.0
BURST_GAP_MEAN = 600.0
EPOCH_START = dt.date(2021, 3, 1)


def _hm(text: str) -> int:
    h, m = text.split(":")
    return int(h) * 3600 + int(m) * 60


def _schedule(*pairs) -> tuple:
    return tuple((_hm(t), loc) for t, loc in pairs)


@dataclass(frozen=True)
class RoutineTemplate:
    """Canonical day as ``(start_offset, location)`` anchors, with per-weekday overrides.

    Weekdays follow :meth:`datetime.date.weekday` (Monday is 0).
    """

    schedule: tuple
    weekly_overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple((int(o), str(l)) for o, l in self.schedule))
        object.__setattr__(
            self,
            "weekly_overrides",
            {int(k): tuple((int(o), str(l)) for o, l in v) for k, v in dict(self.weekly_overrides).items()},
        )
        for name, sched in [("schedule", self.schedule)] + [(f"weekday {k}", v) for k, v in self.weekly_overrides.items()]:
            _validate_schedule(sched, name)

    def day_schedule(self, weekday: int) -> tuple:
        return self.weekly_overrides.get(weekday, self.schedule)

    def to_json(self) -> dict:
        return {
            "schedule": [list(a) for a in self.schedule],
            "weekly_overrides": {str(k): [list(a) for a in v] for k, v in sorted(self.weekly_overrides.items())},
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "RoutineTemplate":
        return cls(
            tuple(tuple(a) for a in rec["schedule"]),
            {int(k): tuple(tuple(a) for a in v) for k, v in rec.get("weekly_overrides", {}).items()},
        )


def _validate_schedule(sched: Sequence, name: str) -> None:
    if not sched or sched[0][0] != 0:
        raise ValueError(f"{name}: first anchor must be at offset 0")
    offsets = [o for o, _ in sched]
    if any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ValueError(f"{name}: anchors must be strictly increasing")
    if offsets[-1] >= DAY_SECONDS:
        raise ValueError(f"{name}: anchors must lie within the day")
    for i, (off, loc) in enumerate(sched):
        if loc not in LOCATIONS:
            raise ValueError(f"{name}: unknown location {loc!r}")
        if off % TICK:
            raise ValueError(f"{name}: offsets must be multiples of {TICK} s")
        if loc == "outside":
            if i == 0 or sched[i - 1][1] != "entrance":
                raise ValueError(f"{name}: an outside stay must follow an entrance stay")
            if i == len(sched) - 1 or sched[i + 1][1] == "outside":
                raise ValueError(f"{name}: an outside stay must end indoors the same day")


def default_template() -> RoutineTemplate:
    weekday = _schedule(
        ("00:00", "bedroom"), ("06:45", "bathroom"), ("07:15", "kitchen"), ("08:00", "living_room"),
        ("10:00", "entrance"), ("10:10", "outside"), ("11:45", "kitchen"), ("12:45", "living_room"),
        ("15:30", "bathroom"), ("15:45", "living_room"), ("18:00", "kitchen"), ("19:00", "living_room"),
        ("21:45", "bathroom"), ("22:15", "bedroom"),
    )
    wednesday = _schedule(
        ("00:00", "bedroom"), ("06:30", "bathroom"), ("07:00", "kitchen"), ("07:40", "entrance"),
        ("07:50", "outside"), ("11:00", "kitchen"), ("12:30", "living_room"), ("17:30", "kitchen"),
        ("18:30", "living_room"), ("21:30", "bathroom"), ("22:00", "bedroom"),
    )
    saturday = _schedule(
        ("00:00", "bedroom"), ("08:00", "bathroom"), ("08:30", "kitchen"), ("09:30", "living_room"),
        ("13:00", "kitchen"), ("14:00", "entrance"), ("14:10", "outside"), ("17:00", "living_room"),
        ("18:30", "kitchen"), ("19:15", "living_room"), ("22:30", "bathroom"), ("23:00", "bedroom"),
    )
    sunday = _schedule(
        ("00:00", "bedroom"), ("07:30", "bathroom"), ("08:00", "kitchen"), ("08:45", "entrance"),
        ("08:55", "outside"), ("13:30", "living_room"), ("16:00", "kitchen"), ("16:30", "living_room"),
        ("21:30", "bathroom"), ("22:00", "bedroom"),
    )
    return RoutineTemplate(weekday, {2: wednesday, 5: saturday, 6: sunday})


def weekly_template() -> RoutineTemplate:
    """Seven distinct weekday routines (strong 7-day periodicity)."""
    base = default_template()
    monday = _schedule(
        ("00:00", "bedroom"), ("06:00", "bathroom"), ("06:30", "kitchen"), ("07:30", "living_room"),
        ("09:00", "entrance"), ("09:10", "outside"), ("10:30", "living_room"), ("12:00", "kitchen"),
        ("13:00", "bedroom"), ("14:30", "living_room"), ("18:00", "kitchen"), ("19:00", "living_room"),
        ("21:30", "bathroom"), ("22:00", "bedroom"),
    )
    tuesday = _schedule(
        ("00:00", "bedroom"), ("07:00", "bathroom"), ("07:30", "kitchen"), ("08:15", "living_room"),
        ("11:30", "kitchen"), ("12:30", "living_room"), ("14:00", "entrance"), ("14:10", "outside"),
        ("16:30", "kitchen"), ("17:00", "living_room"), ("20:00", "bathroom"), ("20:30", "bedroom"),
    )
    thursday = _schedule(
        ("00:00", "bedroom"), ("06:45", "bathroom"), ("07:15", "kitchen"), ("08:00", "living_room"),
        ("10:00", "bathroom"), ("10:30", "living_room"), ("12:00", "kitchen"), ("13:00", "bedroom"),
        ("15:00", "entrance"), ("15:10", "outside"), ("18:30", "kitchen"), ("19:30", "living_room"),
        ("22:00", "bathroom"), ("22:30", "bedroom"),
    )
    friday = _schedule(
        ("00:00", "bedroom"), ("06:15", "bathroom"), ("06:45", "kitchen"), ("07:30", "entrance"),
        ("07:40", "outside"), ("09:30", "kitchen"), ("10:30", "living_room"), ("16:00", "kitchen"),
        ("17:30", "entrance"), ("17:40", "outside"), ("20:00", "living_room"), ("23:00", "bathroom"),
        ("23:30", "bedroom"),
    )
    ov = dict(base.weekly_overrides)
    ov.update({0: monday, 1: tuesday, 3: thursday, 4: friday})
    return RoutineTemplate(base.schedule, ov)


@dataclass(frozen=True)
class NoiseProfile:
    jitter_sigma: float  # seconds
    erratic_rate: float  # excursions per day

    def __post_init__(self):
        if not (self.jitter_sigma >= 0 and self.erratic_rate >= 0):
            raise ValueError("jitter_sigma and erratic_rate must be >= 0")


@dataclass(frozen=True)
class ScoreLink:
    """Linear map from (30 - score) to noise parameters."""

    base_jitter: float = 300.0
    jitter_per_point: float = 90.0
    base_rate: float = 0.5
    rate_per_point: float = 0.35

    def __post_init__(self):
        if min(self.base_jitter, self.jitter_per_point, self.base_rate, self.rate_per_point) < 0:
            raise ValueError("score link coefficients must be >= 0")

    def __call__(self, score: float) -> NoiseProfile:
        deficit = 30.0 - float(score)
        return NoiseProfile(self.base_jitter + self.jitter_per_point * deficit, self.base_rate + self.rate_per_point * deficit)


STRONG_LINK = ScoreLink(base_jitter=120.0, jitter_per_point=240.0, base_rate=0.2, rate_per_point=0.8)


# --------------------------------------------------------------------------
# one person


def _jitter_anchors(sched: tuple, sigma: float, quiet_period: float, rng: np.random.Generator) -> list:
    offsets = np.array([o for o, _ in sched], dtype=float)
    if sigma > 0 and len(offsets) > 1:
        offsets[1:] += rng.normal(0.0, sigma, len(offsets) - 1)
    offsets = np.round(offsets / TICK) * TICK
    offsets[0] = 0.0
    gaps = [0.0] + [
        _quantize_up(quiet_period + 60.0) if loc == "outside" else float(MIN_STAY)
        for _, loc in sched[1:]
    ]
    for i in range(1, len(offsets)):
        offsets[i] = max(offsets[i], offsets[i - 1] + gaps[i])
    limit = DAY_SECONDS - MIN_STAY
    for i in range(len(offsets) - 1, 0, -1):
        cap = limit if i == len(offsets) - 1 else offsets[i + 1] - gaps[i + 1]
        offsets[i] = min(offsets[i], cap)
    if any(offsets[i] - offsets[i - 1] < gaps[i] for i in range(1, len(offsets))):
        raise ValueError("schedule does not fit in one day with the required gaps")
    return [(float(o), loc) for o, (_, loc) in zip(offsets, sched)]


def _quantize_up(x: float) -> float:
    return math.ceil(x / TICK) * TICK


def _stays(anchors: list) -> list:
    return [(a, anchors[i + 1][0] if i + 1 < len(anchors) else float(DAY_SECONDS), loc) for i, (a, loc) in enumerate(anchors)]


def _protected(stays: list, quiet_period: float) -> list:
    zones = []
    for a, b, loc in stays:
        if loc == "outside":
            zones.append((a - quiet_period - 60.0, b + MIN_STAY))
    return zones


def _add_excursions(stays: list, rate: float, quiet_period: float, rng: np.random.Generator) -> list:
    count = rng.poisson(rate) if rate > 0 else 0
    zones = _protected(stays, quiet_period)
    lo_d, hi_d = EXCURSION_RANGE
    for _ in range(count):
        dur = _quantize_up(min(max(rng.exponential(EXCURSION_MEAN), lo_d), hi_d))
        start = float(rng.integers(0, (DAY_SECONDS - dur) // TICK)) * TICK
        room = INDOOR[int(rng.integers(len(INDOOR)))]
        end = start + dur
        if any(start < zb and end > za for za, zb in zones):
            continue
        painted = []
        for a, b, loc in stays:
            if b <= start or a >= end:
                painted.append((a, b, loc))
                continue
            if a < start:
                painted.append((a, start, loc))
            painted.append((max(a, start), min(b, end), room))
            if b > end:
                painted.append((end, b, loc))
        stays = merge_segments(painted)
    # keep every stay long enough to carry its own PIR firing
    return _absorb_short(stays)


def _absorb_short(stays: list) -> list:
    out: list = []
    for a, b, loc in stays:
        if b - a < TICK and out:
            out[-1] = (out[-1][0], b, out[-1][2])
        else:
            out.append((a, b, loc))
    return merge_segments(out)


def _bursts(a: float, limit: float, rng: np.random.Generator) -> list:
    """Non-overlapping PIR firings ``(start, duration)`` in ``[a, limit)``, first one at ``a``."""
    out = []
    t = a
    while t < limit:
        dur = _quantize_up(max(rng.exponential(BURST_MEAN), TICK))
        dur = min(dur, limit - t)
        out.append((t, dur))
        t += dur + _quantize_up(max(rng.exponential(BURST_GAP_MEAN), TICK))
    return out


@dataclass(frozen=True, eq=False)
class SyntheticPerson:
    person_id: str
    noise: NoiseProfile
    timelines: tuple  # retained days only
    events: tuple  # full stream, including the two edge days


def generate_person(
    template: RoutineTemplate,
    noise: NoiseProfile,
    days: int,
    seed,
    person_id: str = "p0",
    start_date: dt.date = EPOCH_START,
    quiet_period: float = DEFAULT_QUIET_PERIOD,
) -> SyntheticPerson:
    """Simulate ``days`` retained days (plus an installation and a removal day).

    Days are UTC calendar days. The returned timelines are exactly what
    :func:`eigenbehaviour.ingest.build_day_timelines` recovers from the
    returned events.
    """
    if days < 2:
        raise ValueError("days must be >= 2")
    if quiet_period % TICK:
        raise ValueError(f"quiet_period must be a multiple of {TICK} s")
    rng = np.random.default_rng(seed)
    epoch0 = dt.datetime.combine(start_date, dt.time(0), tzinfo=dt.timezone.utc).timestamp()
    timelines = []
    events = []
    for d in range(days + 2):
        date = start_date + dt.timedelta(days=d)
        anchors = _jitter_anchors(template.day_schedule(date.weekday()), noise.jitter_sigma, quiet_period, rng)
        stays = _add_excursions(_stays(anchors), noise.erratic_rate, quiet_period, rng)
        t0 = epoch0 + d * DAY_SECONDS
        attested = 0.0
        for i, (a, b, loc) in enumerate(stays):
            if loc == "outside":
                events.append(SensorEvent(person_id, "door_entrance", "entrance_door", t0 + a - quiet_period, 0.0, "entrance_door"))
                if b - TICK > a:
                    events.append(SensorEvent(person_id, "door_entrance", "entrance_door", t0 + b - TICK, 0.0, "entrance_door"))
                continue
            leaving = i + 1 < len(stays) and stays[i + 1][2] == "outside"
            limit = b - quiet_period if leaving else b
            for s, dur in _bursts(a, limit, rng):
                events.append(SensorEvent(person_id, f"pir_{loc}", loc, t0 + s, dur, "motion"))
                attested += dur
            if loc == "kitchen" and b - a >= 600:
                when = a + _quantize_up(rng.uniform(0, b - a - TICK))
                events.append(SensorEvent(person_id, "door_fridge", "fridge_door", t0 + min(when, b - TICK), TICK, "fridge_door"))
        if 0 < d <= days:
            timelines.append(DayTimeline(person_id, date, tuple(stays), attested / DAY_SECONDS))
    events.sort(key=SensorEvent.sort_key)
    return SyntheticPerson(person_id, noise, tuple(timelines), tuple(events))


# --------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class CohortConfig:
    score_mean: float = 23.88
    score_sd: float = 4.54
    age_low: float = 65.0
    age_high: float = 98.0
    age_score_corr: float = -0.38
    days_mean: float = 30.6
    days_sd: float = 3.6
    min_days: int = 14
    heterogeneity: float = 0.6  # log-sd of a per-person factor on both noise parameters
    link: ScoreLink = field(default_factory=ScoreLink)
    template: RoutineTemplate = field(default_factory=default_template)
    quiet_period: float = DEFAULT_QUIET_PERIOD
    scores: tuple | None = None  # fixed scores override the distribution

    def validate(self) -> None:
        if self.scores is None and not self.score_sd > 0:
            raise DataError("score_sd must be positive")
        if not self.age_high > self.age_low > 0:
            raise DataError("need 0 < age_low < age_high")
        if not -1.0 < self.age_score_corr < 1.0:
            raise DataError("age_score_corr must lie in (-1, 1)")
        if self.days_sd < 0 or self.min_days < 2:
            raise DataError("days_sd must be >= 0 and min_days >= 2")
        if self.heterogeneity < 0:
            raise DataError("heterogeneity must be >= 0")
        if self.scores is not None and any(not 0 <= s <= 30 for s in self.scores):
            raise DataError("fixed scores must lie in [0, 30]")

    def to_json(self) -> dict:
        rec = {k: v for k, v in asdict(self).items() if k not in ("link", "template")}
        rec["link"] = asdict(self.link)
        rec["template"] = self.template.to_json()
        rec["scores"] = None if self.scores is None else list(self.scores)
        return rec

    @classmethod
    def from_json(cls, rec: Mapping) -> "CohortConfig":
        rec = dict(rec)
        unknown = set(rec) - {f.name for f in fields(cls)}
        if unknown:
            raise DataError(f"unknown generator config keys: {sorted(unknown)}")
        try:
            if "link" in rec:
                rec["link"] = ScoreLink(**rec["link"])
            if "template" in rec:
                rec["template"] = RoutineTemplate.from_json(rec["template"])
            if rec.get("scores") is not None:
                rec["scores"] = tuple(rec["scores"])
        except (TypeError, KeyError, ValueError) as exc:
            raise DataError(f"bad generator config: {exc}") from None
        return cls(**rec)


@dataclass(frozen=True, eq=False)
class SyntheticCohort:
    rows: tuple  # (person_id, age, score)
    persons: tuple
    config: CohortConfig

    @property
    def events(self) -> list:
        return [e for p in self.persons for e in p.events]

    def timelines(self) -> dict:
        return {p.person_id: p.timelines for p in self.persons}


def _clipped_moments(mu: float, sigma: float, lo: float = 0.0, hi: float = 30.0) -> tuple:
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    Pa, Pb = stats.norm.cdf(a), stats.norm.cdf(b)
    pa, pb = stats.norm.pdf(a), stats.norm.pdf(b)
    # E[Z 1{a<Z<b}] and E[Z^2 1{a<Z<b}] for standard normal Z
    m1 = pa - pb
    m2 = (Pb - Pa) + a * pa - b * pb
    mean = lo * Pa + hi * (1 - Pb) + mu * (Pb - Pa) + sigma * m1
    second = lo * lo * Pa + hi * hi * (1 - Pb) + mu * mu * (Pb - Pa) + 2 * mu * sigma * m1 + sigma * sigma * m2
    return mean, math.sqrt(max(second - mean * mean, 0.0))


@lru_cache(maxsize=16)
def latent_score_params(mean: float, sd: float) -> tuple:
    """Normal parameters whose [0, 30]-clipped version has the requested mean and SD."""
    def gap(p):
        m, s = _clipped_moments(p[0], math.exp(p[1]))
        return [m - mean, s - sd]

    sol, info, ok, _ = optimize.fsolve(gap, [mean, math.log(sd)], full_output=True)
    if ok != 1 or max(abs(v) for v in info["fvec"]) > 1e-8:
        raise DataError(f"no clipped normal on [0, 30] has mean {mean} and SD {sd}")
    return float(sol[0]), math.exp(float(sol[1]))


def sample_demographics(size: int, config: CohortConfig, rng: np.random.Generator) -> tuple:
    ages = rng.uniform(config.age_low, config.age_high, size)
    if config.scores is not None:
        if len(config.scores) != size:
            raise DataError("number of fixed scores differs from cohort size")
        return ages, np.asarray(config.scores, dtype=float)
    mid = 0.5 * (config.age_low + config.age_high)
    sd = (config.age_high - config.age_low) / math.sqrt(12.0)
    z_age = (ages - mid) / sd
    rho = config.age_score_corr
    z = rho * z_age + math.sqrt(1.0 - rho * rho) * rng.standard_normal(size)
    mu, sigma = latent_score_params(config.score_mean, config.score_sd)
    scores = np.clip(np.round(mu + sigma * z), 0, 30)
    return ages, scores


def generate_cohort(size: int = 48, seed: int = 0, config: CohortConfig | None = None) -> SyntheticCohort:
    """Sample a cohort and simulate every member with score-linked noise.

    Each person draws from an independent child of ``SeedSequence(seed)``,
    so results do not depend on generation order.
    """
    config = CohortConfig() if config is None else config
    config.validate()
    if size < 4:
        raise DataError("cohort size must be >= 4")
    root = np.random.SeedSequence(seed)
    cohort_seq, *person_seqs = root.spawn(size + 1)
    rng = np.random.default_rng(cohort_seq)
    ages, scores = sample_demographics(size, config, rng)
    n_days = np.maximum(np.round(rng.normal(config.days_mean, config.days_sd, size)), config.min_days).astype(int)
    factors = np.exp(config.heterogeneity * rng.standard_normal(size)) if config.heterogeneity > 0 else np.ones(size)
    offsets = rng.integers(0, 28, size)
    width = max(2, len(str(size - 1)))
    rows, persons = [], []
    for i in range(size):
        pid = f"p{i:0{width}d}"
        base = config.link(scores[i])
        noise = NoiseProfile(base.jitter_sigma * factors[i], base.erratic_rate * factors[i])
        person = generate_person(
            config.template, noise, int(n_days[i]), person_seqs[i], pid,
            EPOCH_START + dt.timedelta(days=int(offsets[i])), config.quiet_period,
        )
        rows.append((pid, round(float(ages[i]), 2), int(scores[i])))
        persons.append(person)
    return SyntheticCohort(tuple(rows), tuple(persons), config)


def load_cohort_config(path) -> CohortConfig:
    """Read a generator config; the ``generator.json`` written by a previous simulation is accepted too."""
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    if not isinstance(rec, dict):
        raise DataError(f"{path} must hold a JSON object")
    if "config" in rec:
        rec = rec["config"]
    return CohortConfig.from_json(rec)

"""Study configuration, level/period enums and the study calendar."""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, replace
from functools import cached_property
from zoneinfo import ZoneInfo

import numpy as np


class Level(enum.IntEnum):
    """Ordinal state level. Ordering L < N < H is meaningful."""

    L = 0
    N = 1
    H = 2

    @classmethod
    def parse(cls, value) -> "Level":
        if isinstance(value, Level):
            return value
        return cls[str(value).strip().upper()]


LEVELS = (Level.L, Level.N, Level.H)


class Period(enum.Enum):
    Morning = "Morning"
    Midday = "Midday"
    Afternoon = "Afternoon"

    # members are singletons; identity hashing keeps dict lookups in C
    __hash__ = object.__hash__

    @property
    def index(self) -> int:
        return self._index

    @classmethod
    def parse(cls, value) -> "Period":
        if isinstance(value, Period):
            return value
        text = str(value).strip().lower()
        for p in cls:
            if p.value.lower() == text:
                return p
        raise ValueError(f"unknown period {value!r}")


PERIODS = (Period.Morning, Period.Midday, Period.Afternoon)
for _i, _p in enumerate(PERIODS):
    _p._index = _i


class Slot(enum.Enum):
    """Window between two consecutive same-day surveys."""

    MorningToMidday = "MorningToMidday"
    MiddayToAfternoon = "MiddayToAfternoon"

    __hash__ = object.__hash__

    @property
    def index(self) -> int:
        return self._index

    @property
    def start(self) -> Period:
        return PERIODS[self._index]

    @property
    def end(self) -> Period:
        return PERIODS[self._index + 1]

    @property
    def period_dummy(self) -> int:
        """0 for midday-targeted transitions, 1 for afternoon-targeted."""
        return self._index

    @classmethod
    def parse(cls, value) -> "Slot":
        if isinstance(value, Slot):
            return value
        return cls(str(value).strip())


SLOTS = (Slot.MorningToMidday, Slot.MiddayToAfternoon)
for _i, _s in enumerate(SLOTS):
    _s._index = _i


@dataclass(frozen=True)
class StateDef:
    """Item composition of one experience-sampled state.

    ``items`` are scored as-is, ``reverse_items`` are recoded as
    ``scale_max + scale_min - raw`` before averaging.
    """

    name: str
    items: tuple[str, ...]
    reverse_items: tuple[str, ...] = ()
    scale_min: float = 1.0
    scale_max: float = 7.0
    kind: str = "tipi"

    def __post_init__(self):
        if not self.items and not self.reverse_items:
            raise ValueError(f"state {self.name!r} has no items")
        if self.scale_max <= self.scale_min:
            raise ValueError(f"state {self.name!r}: empty scale range")

    @property
    def all_items(self) -> tuple[str, ...]:
        return tuple(self.items) + tuple(self.reverse_items)


def _tipi(name, standard, reverse):
    return StateDef(name, (standard,), (reverse,), 1.0, 7.0, "tipi")


def _panas(name, *items):
    return StateDef(name, tuple(f"panas_{i}" for i in items), (), 1.0, 5.0, "panas")


DEFAULT_STATES = (
    _tipi("extraversion", "tipi1", "tipi6"),
    _tipi("agreeableness", "tipi7", "tipi2"),
    _tipi("conscientiousness", "tipi3", "tipi8"),
    _tipi("emotional_stability", "tipi9", "tipi4"),
    _tipi("creativity", "tipi5", "tipi10"),
    _panas("hpa", "enthusiastic", "interested", "active"),
    _panas("hna", "sad", "bored", "sluggish"),
    _panas("lpa", "calm", "relaxed"),
    _panas("lna", "lonely", "isolated"),
)

IN_SCOPE_TRAITS = (
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "emotional_stability",
    "creativity",
    "hpa",
    "lna",
)


@dataclass(frozen=True)
class StudyConfig:
    """Everything the pipeline needs to know about one study.

    Clock times are study-local (``timezone``); all instants handled by
    the package are UTC. Study days are consecutive working days
    (Monday-Friday) starting at ``start_date``.
    """

    states: tuple[StateDef, ...] = DEFAULT_STATES
    trait_names: tuple[str, ...] = IN_SCOPE_TRAITS
    start_date: dt.date = dt.date(2012, 3, 5)
    n_days: int = 30
    timezone: str = "Europe/Rome"
    trigger_times: tuple[dt.time, dt.time, dt.time] = (
        dt.time(11, 0),
        dt.time(14, 0),
        dt.time(17, 0),
    )
    response_window: dt.timedelta = dt.timedelta(hours=2.5)
    hit_threshold: float = 10
    alpha: float = 0.05
    relevance_threshold: float = 0.001
    level_share_floor: float = 0.10
    min_rows: int = 30
    max_reject_fraction: float = 0.10
    population_sd: bool = True
    participants: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        if len(self.trigger_times) != 3 or list(self.trigger_times) != sorted(self.trigger_times):
            raise ValueError("need three increasing trigger times")
        if self.hit_threshold <= 0 or self.alpha <= 0 or self.relevance_threshold <= 0:
            raise ValueError("thresholds must be > 0")
        if self.response_window <= dt.timedelta(0):
            raise ValueError("response window must be positive")
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise ValueError("duplicate state names")

    def with_(self, **changes) -> "StudyConfig":
        return replace(self, **changes)

    @cached_property
    def state_map(self) -> dict[str, StateDef]:
        return {s.name: s for s in self.states}

    @cached_property
    def item_scales(self) -> dict[str, tuple[float, float]]:
        out = {}
        for s in self.states:
            for code in s.all_items:
                out[code] = (s.scale_min, s.scale_max)
        return out

    @cached_property
    def tz(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    @cached_property
    def study_dates(self) -> tuple[dt.date, ...]:
        dates = []
        d = self.start_date
        while len(dates) < self.n_days:
            if d.weekday() < 5:
                dates.append(d)
            d += dt.timedelta(days=1)
        return tuple(dates)

    def day_date(self, day: int) -> dt.date:
        if not 1 <= day <= self.n_days:
            raise ValueError(f"day {day} outside 1..{self.n_days}")
        return self.study_dates[day - 1]

    def local_to_utc(self, date: dt.date, time: dt.time) -> dt.datetime:
        local = dt.datetime.combine(date, time, tzinfo=self.tz)
        return local.astimezone(dt.timezone.utc)

    def trigger_utc(self, day: int, period: Period) -> dt.datetime:
        return self.local_to_utc(self.day_date(day), self.trigger_times[Period.parse(period).index])

    @cached_property
    def trigger_table(self) -> np.ndarray:
        """Epoch seconds of every trigger, shape ``(n_days, 3)``."""
        table = np.empty((self.n_days, 3), dtype=np.int64)
        for i in range(self.n_days):
            for p in PERIODS:
                table[i, p.index] = int(self.trigger_utc(i + 1, p).timestamp())
        return table

    @cached_property
    def calendar_bounds(self) -> tuple[int, int]:
        """Half-open epoch-second range covering every local study day."""
        first = self.local_to_utc(self.study_dates[0], dt.time(0, 0))
        last = self.local_to_utc(self.study_dates[-1] + dt.timedelta(days=1), dt.time(0, 0))
        return int(first.timestamp()), int(last.timestamp())


TERMS = ("L", "N", "H", "T", "T*L", "T*N", "T*H", "P", "P*T")
"""Covariates of the full transition model, intercept excluded."""


def _parse_time(value) -> dt.time:
    if isinstance(value, dt.time):
        return value
    return dt.time.fromisoformat(str(value))


def study_config_from_dict(data: dict, base: StudyConfig | None = None) -> StudyConfig:
    """Build a :class:`StudyConfig` from a plain key-value tree.

    Accepted keys are the dataclass fields except ``states``, with
    ``start_date`` as ISO date, ``trigger_times`` as ``"HH:MM"`` strings
    and ``response_window_minutes`` in place of ``response_window``.
    """
    base = base or StudyConfig()
    data = dict(data or {})
    changes = {}
    if "start_date" in data:
        changes["start_date"] = dt.date.fromisoformat(str(data.pop("start_date")))
    if "trigger_times" in data:
        changes["trigger_times"] = tuple(_parse_time(t) for t in data.pop("trigger_times"))
    if "response_window_minutes" in data:
        changes["response_window"] = dt.timedelta(minutes=float(data.pop("response_window_minutes")))
    for key in ("trait_names", "participants"):
        if key in data and data[key] is not None:
            changes[key] = tuple(str(v) for v in data.pop(key))
    allowed = set(StudyConfig.__dataclass_fields__) - {"states", "response_window"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    changes.update(data)
    return base.with_(**changes)


def study_config_to_dict(config: StudyConfig) -> dict:
    return {
        "start_date": config.start_date.isoformat(),
        "n_days": config.n_days,
        "timezone": config.timezone,
        "trigger_times": [t.strftime("%H:%M") for t in config.trigger_times],
        "response_window_minutes": config.response_window.total_seconds() / 60,
        "hit_threshold": config.hit_threshold,
        "alpha": config.alpha,
        "relevance_threshold": config.relevance_threshold,
        "level_share_floor": config.level_share_floor,
        "min_rows": config.min_rows,
        "max_reject_fraction": config.max_reject_fraction,
        "population_sd": config.population_sd,
        "participants": None if config.participants is None else list(config.participants),
        "trait_names": list(config.trait_names),
        "states": [
            {"name": s.name, "items": list(s.items), "reverse_items": list(s.reverse_items),
             "scale": [s.scale_min, s.scale_max], "kind": s.kind}
            for s in config.states
        ],
    }

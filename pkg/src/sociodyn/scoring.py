"""State scores, tertile levels and normalized trait profiles."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import Level, Period, StateDef, StudyConfig
from .data_model import SurveyResponse, TraitSurvey

log = logging.getLogger(__name__)

QUANTILES = (0.33, 0.66)


class DegenerateDistribution(ValueError):
    """All scores of a state are equal; no tertile split exists."""

    def __init__(self, value: float, state: str | None = None):
        self.value = value
        self.state = state
        super().__init__(f"constant scores ({value}) for state {state!r}")


class ZeroVariance(ValueError):
    pass


@dataclass(frozen=True)
class StateScore:
    participant_id: str
    day: int
    period: Period
    state: str
    score: float


@dataclass(frozen=True)
class LevelAssignment:
    participant_id: str
    day: int
    period: Period
    state: str
    score: float
    level: Level


@dataclass(frozen=True)
class QuantileCuts:
    state: str
    q33: float
    q66: float

    def __post_init__(self):
        if self.q33 > self.q66:
            raise ValueError("q33 must not exceed q66")


@dataclass(frozen=True)
class TraitProfile:
    participant_id: str
    trait: str
    z: float
    trait_class: str  # LowTrait | MidTrait | HighTrait


@dataclass(frozen=True)
class ScreenResult:
    state: str
    keep: bool
    reason: str = ""
    shares: tuple[float, float, float] = (math.nan, math.nan, math.nan)


def recode_reverse(raw: float, scale_min: float, scale_max: float) -> float:
    return scale_max + scale_min - raw


def _mean_items(items: Mapping[str, float], state: StateDef) -> float | None:
    values = []
    for code in state.items:
        if code not in items:
            return None
        values.append(items[code])
    for code in state.reverse_items:
        if code not in items:
            return None
        values.append(recode_reverse(items[code], state.scale_min, state.scale_max))
    return float(np.mean(values))


def _score(response, state: StateDef) -> StateScore | None:
    if isinstance(response, SurveyResponse):
        s = _mean_items(response.items, state)
        if s is None:
            return None
        return StateScore(response.participant_id, response.day, response.period, state.name, s)
    return _mean_items(response, state)


def score_big5_state(response: SurveyResponse | Mapping[str, float], state: StateDef):
    """TIPI dimension score: mean of the standard and recoded reverse item.

    Accepts a whole :class:`SurveyResponse` (returns a :class:`StateScore`)
    or a bare item mapping (returns a float). Returns None when an item of
    the dimension is missing.
    """
    return _score(response, state)


def score_panas_state(response: SurveyResponse | Mapping[str, float], state: StateDef):
    """PANAS affect score: plain mean of the scale's items."""
    return _score(response, state)


def score_surveys(surveys: Iterable[SurveyResponse], config: StudyConfig) -> list[StateScore]:
    out = []
    for r in surveys:
        for state in config.states:
            fn = score_big5_state if state.kind == "tipi" else score_panas_state
            s = fn(r, state)
            if s is not None:
                out.append(s)
    return out


def center_scores(scores: Sequence[StateScore]) -> list[StateScore]:
    """Subtract each state's median score."""
    by_state = defaultdict(list)
    for s in scores:
        by_state[s.state].append(s.score)
    medians = {k: float(np.median(v)) for k, v in by_state.items()}
    return [replace(s, score=s.score - medians[s.state]) for s in scores]


def fit_quantile_cuts(scores: Sequence[float], state: str = "") -> QuantileCuts:
    """Empirical 33rd/66th percentiles (linear interpolation estimator).

    Raises
    ------
    DegenerateDistribution
        If every score is the same.
    """
    x = np.asarray(scores, dtype=float)
    if x.size == 0:
        raise ValueError(f"no scores for state {state!r}")
    if np.all(x == x[0]):
        raise DegenerateDistribution(float(x[0]), state)
    if np.unique(x).size < 3:
        log.warning("state %r has fewer than 3 distinct scores", state)
    q33, q66 = np.percentile(x, [100 * QUANTILES[0], 100 * QUANTILES[1]], method="linear")
    return QuantileCuts(state, float(q33), float(q66))


def assign_level(score: float, cuts: QuantileCuts) -> Level:
    """Ties at a cut go to the lower level."""
    if score <= cuts.q33:
        return Level.L
    if score <= cuts.q66:
        return Level.N
    return Level.H


def level_shares(scores: Sequence[float], cuts: QuantileCuts) -> tuple[float, float, float]:
    x = np.asarray(scores, dtype=float)
    n = x.size
    low = np.count_nonzero(x <= cuts.q33)
    mid = np.count_nonzero((x > cuts.q33) & (x <= cuts.q66))
    return low / n, mid / n, (n - low - mid) / n


def skewness_screen(scores: Sequence[float], state: str = "", floor: float = 0.10) -> ScreenResult:
    """Discard a state whose tertile partition is infeasible.

    The partition is infeasible when both cuts coincide or when any level
    holds less than ``floor`` of the scores.
    """
    try:
        cuts = fit_quantile_cuts(scores, state)
    except DegenerateDistribution as exc:
        return ScreenResult(state, False, f"constant scores ({exc.value})")
    shares = level_shares(scores, cuts)
    if cuts.q33 == cuts.q66:
        return ScreenResult(state, False, "q33 == q66", shares)
    if min(shares) < floor:
        return ScreenResult(state, False, f"level share {min(shares):.3f} below {floor}", shares)
    return ScreenResult(state, True, "", shares)


@dataclass
class LevelTable:
    """Quantized levels for every scored survey, plus per-state metadata."""

    assignments: list[LevelAssignment]
    cuts: dict[str, QuantileCuts]
    screens: dict[str, ScreenResult]

    def __post_init__(self):
        self._index = {(a.participant_id, a.day, a.period, a.state): a.level for a in self.assignments}

    @property
    def kept_states(self) -> list[str]:
        return [s for s, r in self.screens.items() if r.keep]

    def get(self, pid: str, day: int, period: Period, state: str) -> Level | None:
        return self._index.get((pid, day, period, state))

    def __contains__(self, key) -> bool:
        return key in self._index

    def lookup(self) -> dict[tuple, Level]:
        return self._index


def quantize(scores: Sequence[StateScore], config: StudyConfig) -> LevelTable:
    """Median-center, screen, cut and level every state independently.

    States failing :func:`skewness_screen` get no level assignments.
    """
    centered = center_scores(scores)
    by_state: dict[str, list[StateScore]] = defaultdict(list)
    for s in centered:
        by_state[s.state].append(s)
    assignments, cuts, screens = [], {}, {}
    for state in (s.name for s in config.states):
        rows = by_state.get(state, [])
        values = [r.score for r in rows]
        if not values:
            screens[state] = ScreenResult(state, False, "no scores")
            continue
        screen = skewness_screen(values, state, config.level_share_floor)
        screens[state] = screen
        if not screen.keep:
            log.info("state %s discarded: %s", state, screen.reason)
            continue
        c = fit_quantile_cuts(values, state)
        cuts[state] = c
        for r in rows:
            assignments.append(
                LevelAssignment(r.participant_id, r.day, r.period, state, r.score, assign_level(r.score, c))
            )
    assignments.sort(key=lambda a: (a.participant_id, a.day, a.period.index, a.state))
    return LevelTable(assignments, cuts, screens)


def build_levels(surveys: Iterable[SurveyResponse], config: StudyConfig) -> LevelTable:
    return quantize(score_surveys(surveys, config), config)


def classify_trait(z: float) -> str:
    if z <= -1:
        return "LowTrait"
    if z >= 1:
        return "HighTrait"
    return "MidTrait"


def normalize_traits(
    traits: Iterable[TraitSurvey],
    wave: str = "Begin",
    names: Sequence[str] | None = None,
    population_sd: bool = True,
) -> list[TraitProfile]:
    """z-score each trait against the cohort of the given wave.

    Parameters
    ----------
    names : sequence of str, optional
        Traits to normalize; defaults to every trait found.
    population_sd : bool
        Divide by n (True) or n - 1.

    Raises
    ------
    ZeroVariance
        A trait has fewer than two participants or no spread.
    """
    raw: dict[str, dict[str, float]] = defaultdict(dict)
    for t in traits:
        if t.wave != wave:
            continue
        for name, score in t.raw_trait_scores.items():
            raw[name][t.participant_id] = float(score)
    if names is None:
        names = sorted(raw)
    out = []
    for name in names:
        cohort = raw.get(name, {})
        pids = sorted(cohort)
        x = np.array([cohort[p] for p in pids])
        if x.size < 2:
            raise ZeroVariance(f"trait {name!r}: fewer than two participants")
        sd = x.std(ddof=0 if population_sd else 1)
        if sd == 0 or not np.isfinite(sd):
            raise ZeroVariance(f"trait {name!r} has zero standard deviation")
        z = (x - x.mean()) / sd
        out.extend(TraitProfile(p, name, float(v), classify_trait(v)) for p, v in zip(pids, z))
    return out


def trait_lookup(profiles: Iterable[TraitProfile]) -> dict[tuple[str, str], float]:
    return {(p.participant_id, p.trait): p.z for p in profiles}

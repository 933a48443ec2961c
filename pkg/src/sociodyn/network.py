"""Temporal ego windows, contact intensities and network descriptives."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .config import LEVELS, SLOTS, Level, Slot, StudyConfig
from .data_model import IrLog, SurveyResponse
from .scoring import LevelTable


@dataclass(frozen=True)
class IntensityTriple:
    """Hits per unique alter at each level (0 when no alter at a level)."""

    L: float = 0.0
    N: float = 0.0
    H: float = 0.0

    def __getitem__(self, level) -> float:
        return getattr(self, Level.parse(level).name)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.L, self.N, self.H)


@dataclass
class EgoWindow:
    """Contacts sensed by one ego between two consecutive same-day surveys.

    ``alter_levels[state]`` maps each alter that has a level for ``state``
    at the window's start survey to that (lagged) level.
    """

    ego_id: str
    day: int
    slot: Slot
    contacts: dict[str, int] = field(default_factory=dict)
    alter_levels: dict[str, dict[str, Level]] = field(default_factory=dict)

    def retained(self, state: str) -> bool:
        if not self.contacts:
            return True
        known = self.alter_levels.get(state, {})
        return known.keys() >= self.contacts.keys()

    @property
    def key(self) -> tuple[str, int, Slot]:
        return (self.ego_id, self.day, self.slot)


@dataclass
class WindowReport:
    n_events: int = 0
    n_assigned: int = 0
    n_unassigned: int = 0
    n_unknown_alter_hits: int = 0
    unknown_alters: set = field(default_factory=set)
    n_windows: int = 0
    n_missing_survey: int = 0


@dataclass
class AggregateNetwork:
    nodes: list[str]
    edges: dict[tuple[str, str], int]
    threshold: float = 10

    def degrees(self) -> dict[str, int]:
        deg = {n: 0 for n in self.nodes}
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def degree_sequence(self) -> list[int]:
        return sorted(self.degrees().values(), reverse=True)


def assign_events(events: IrLog, config: StudyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Map every hit to ``(day, slot index)``; unassigned hits get day 0.

    Windows are half-open ``[start trigger, end trigger)`` so a hit at
    exactly the midday trigger belongs to the afternoon window.
    """
    flat = config.trigger_table.ravel()
    ts = events.ts
    pos = np.searchsorted(flat, ts, side="right") - 1
    slot = pos % 3
    inside = (pos >= 0) & (slot != 2)
    nxt = np.minimum(pos + 1, flat.size - 1)
    inside &= ts < flat[nxt]
    day = np.where(inside, pos // 3 + 1, 0)
    return day.astype(np.int64), np.where(inside, slot, -1).astype(np.int64)


def count_window_hits(events: IrLog, config: StudyConfig) -> pd.DataFrame:
    """Hit counts per ``(ego, day, slot, alter)`` for in-window hits."""
    day, slot = assign_events(events, config)
    keep = day > 0
    df = pd.DataFrame(
        {
            "ego": events.ego[keep],
            "day": day[keep],
            "slot": slot[keep],
            "alter": events.alter[keep],
        }
    )
    if df.empty:
        return pd.DataFrame({"ego": [], "day": [], "slot": [], "alter": [], "hits": []})
    return df.groupby(["ego", "day", "slot", "alter"], sort=True).size().rename("hits").reset_index()


def build_windows(
    events: IrLog,
    surveys: Iterable[SurveyResponse],
    levels: LevelTable,
    config: StudyConfig,
    participants: Iterable[str] | None = None,
    report: WindowReport | None = None,
) -> list[EgoWindow]:
    """Build one window per ego, day and slot with both bounding surveys.

    Parameters
    ----------
    participants : iterable of str, optional
        Closed cohort; hits on alters outside it are dropped and counted
        in ``report``. Defaults to ``config.participants`` or else every
        participant with a survey.
    report : WindowReport, optional
        Filled with exclusion counts.
    """
    surveys = list(surveys)
    if report is None:
        report = WindowReport()
    present = {(s.participant_id, s.day, s.period) for s in surveys}
    if participants is None:
        participants = config.participants
    if participants is None:
        participants = {s.participant_id for s in surveys}
    pool = set(participants)

    counts = count_window_hits(events, config)
    report.n_events = len(events)
    report.n_assigned = int(counts["hits"].sum()) if len(counts) else 0
    report.n_unassigned = report.n_events - report.n_assigned
    if len(counts):
        known = counts["alter"].isin(pool).to_numpy()
        report.n_unknown_alter_hits = int(counts.loc[~known, "hits"].sum())
        report.unknown_alters = set(counts.loc[~known, "alter"])
        counts = counts[known]

    contacts: dict[tuple, dict[str, int]] = defaultdict(dict)
    for ego, day, slot, alter, hits in zip(
        counts["ego"].tolist(), counts["day"].tolist(), counts["slot"].tolist(),
        counts["alter"].tolist(), counts["hits"].tolist(),
    ):
        contacts[(ego, int(day), int(slot))][alter] = int(hits)

    states = levels.kept_states
    lookup = levels.lookup()
    windows = []
    egos = sorted({pid for pid, _, _ in present} & pool)
    for ego in egos:
        for day in range(1, config.n_days + 1):
            for slot in SLOTS:
                if (ego, day, slot.start) not in present or (ego, day, slot.end) not in present:
                    if (ego, day, slot.start) in present or (ego, day, slot.end) in present:
                        report.n_missing_survey += 1
                    continue
                c = contacts.get((ego, day, slot.index), {})
                alevels = {}
                for state in states:
                    m = {}
                    for alter in c:
                        lv = lookup.get((alter, day, slot.start, state))
                        if lv is not None:
                            m[alter] = lv
                    alevels[state] = m
                windows.append(EgoWindow(ego, day, slot, dict(c), alevels))
    report.n_windows = len(windows)
    return windows


def intensity_from(contacts: Mapping[str, int], alter_levels: Mapping[str, Level]) -> IntensityTriple:
    hits = [0, 0, 0]
    alters = [0, 0, 0]
    for alter, h in contacts.items():
        lv = int(alter_levels[alter])
        hits[lv] += h
        alters[lv] += 1
    vals = [hits[i] / alters[i] if alters[i] else 0.0 for i in range(3)]
    return IntensityTriple(*vals)


def intensity(window: EgoWindow, state: str) -> IntensityTriple:
    """Contact intensity with alters at each (lagged) level of ``state``."""
    if not window.retained(state):
        raise ValueError(f"window {window.key} is excluded for state {state!r}")
    return intensity_from(window.contacts, window.alter_levels.get(state, {}))


@dataclass(frozen=True)
class SimilaritySummary:
    level: Level
    n_windows: int
    count_mean: float
    count_sd: float
    hit_mean: float
    hit_sd: float


def _sd(x: list[float]) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")


def homophily_similarity(windows: Iterable[EgoWindow], levels: LevelTable, state: str) -> dict[Level, SimilaritySummary]:
    """Share of same-level alters (count and hit weighted) by ego level.

    Only retained windows with at least one alter and a known ego level at
    the window start contribute.
    """
    count_r = defaultdict(list)
    hit_r = defaultdict(list)
    for w in windows:
        if not w.contacts or not w.retained(state):
            continue
        ego_level = levels.get(w.ego_id, w.day, w.slot.start, state)
        if ego_level is None:
            continue
        al = w.alter_levels[state]
        same = [a for a in w.contacts if al[a] == ego_level]
        count_r[ego_level].append(len(same) / len(w.contacts))
        hit_r[ego_level].append(sum(w.contacts[a] for a in same) / sum(w.contacts.values()))
    out = {}
    for lv in LEVELS:
        c, h = count_r.get(lv, []), hit_r.get(lv, [])
        out[lv] = SimilaritySummary(
            lv,
            len(c),
            float(np.mean(c)) if c else float("nan"),
            _sd(c),
            float(np.mean(h)) if h else float("nan"),
            _sd(h),
        )
    return out


def aggregate_network(events: IrLog, threshold: float = 10, nodes: Iterable[str] | None = None) -> AggregateNetwork:
    """Undirected network of pairs with strictly more than ``threshold`` hits."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if nodes is None:
        nodes = set(events.ego.tolist()) | set(events.alter.tolist())
    edges = {}
    if len(events):
        first = events.ego < events.alter
        a = np.where(first, events.ego, events.alter)
        b = np.where(first, events.alter, events.ego)
        pairs = pd.DataFrame({"a": a, "b": b}).groupby(["a", "b"], sort=True).size()
        for (x, y), n in pairs.items():
            if n > threshold:
                edges[(x, y)] = int(n)
    return AggregateNetwork(sorted(nodes), edges, threshold)


@dataclass(frozen=True)
class DegreeSummary:
    participant_id: str
    n_windows: int
    alters_quartiles: tuple[float, float, float]
    hits_quartiles: tuple[float, float, float]


def degree_and_interaction_stats(
    windows: Iterable[EgoWindow], participants: Iterable[str] = ()
) -> dict[str, DegreeSummary]:
    """Per-ego quartiles (25/50/75) of alters per window and hits per window."""
    alters = defaultdict(list)
    hits = defaultdict(list)
    for w in windows:
        alters[w.ego_id].append(len(w.contacts))
        hits[w.ego_id].append(sum(w.contacts.values()))
    nan3 = (float("nan"),) * 3
    out = {}
    for pid in sorted(set(alters) | set(participants)):
        a, h = alters.get(pid, []), hits.get(pid, [])
        if not a:
            out[pid] = DegreeSummary(pid, 0, nan3, nan3)
            continue
        qa = tuple(float(v) for v in np.percentile(a, [25, 50, 75]))
        qh = tuple(float(v) for v in np.percentile(h, [25, 50, 75]))
        out[pid] = DegreeSummary(pid, len(a), qa, qh)
    return out

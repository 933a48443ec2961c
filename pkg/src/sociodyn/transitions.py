"""Transition records, per-transition design matrices and count tables."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .config import LEVELS, TERMS, Level, Slot
from .network import EgoWindow, IntensityTriple, intensity_from
from .scoring import LevelTable

INTERCEPT = "Intercept"
_ZERO = IntensityTriple()
ALL_TERMS = (INTERCEPT,) + TERMS


class InsufficientData(ValueError):
    """Too few rows to attempt a fit for one (state, X, Y) design."""


@dataclass(frozen=True)
class TransitionRecord:
    ego_id: str
    day: int
    slot: Slot
    state: str
    from_level: Level
    to_level: Level
    intensities: IntensityTriple
    trait_z: float
    period_dummy: int

    def covariates(self) -> dict[str, float]:
        L, N, H = self.intensities.as_tuple()
        T, P = self.trait_z, float(self.period_dummy)
        return {
            "L": L, "N": N, "H": H, "T": T,
            "T*L": T * L, "T*N": T * N, "T*H": T * H,
            "P": P, "P*T": P * T,
        }


@dataclass(frozen=True)
class DesignRow:
    response: int
    covariates: dict[str, float]
    cluster_id: str
    index: tuple[int, int]  # (day, slot)


@dataclass
class ExtractionReport:
    state: str
    n_windows: int = 0
    n_records: int = 0
    excluded: Counter = field(default_factory=Counter)


def extract_transitions(
    levels: LevelTable,
    windows: Iterable[EgoWindow],
    traits: Mapping[tuple[str, str], float],
    state: str,
    report: ExtractionReport | None = None,
) -> list[TransitionRecord]:
    """Join each retained window with the ego's bounding levels and trait.

    ``traits`` maps ``(participant_id, trait)`` to a z-score; the trait
    paired with a state shares its name. Windows are skipped (and counted
    in ``report.excluded``) when an alter lacks a start level, when either
    bounding level of the ego is missing, or when the ego has no trait.
    """
    if report is None:
        report = ExtractionReport(state)
    out = []
    lookup = levels.lookup()
    excluded = report.excluded
    for w in windows:
        report.n_windows += 1
        known = w.alter_levels.get(state, {})
        if w.contacts and not known.keys() >= w.contacts.keys():
            excluded["alter_coverage"] += 1
            continue
        slot = w.slot
        x = lookup.get((w.ego_id, w.day, slot.start, state))
        y = lookup.get((w.ego_id, w.day, slot.end, state))
        if x is None or y is None:
            excluded["missing_ego_level"] += 1
            continue
        t = traits.get((w.ego_id, state))
        if t is None:
            excluded["missing_trait"] += 1
            continue
        triple = intensity_from(w.contacts, known) if w.contacts else _ZERO
        out.append(TransitionRecord(w.ego_id, w.day, slot, state, x, y, triple, float(t), slot.period_dummy))
    out.sort(key=lambda r: (r.ego_id, r.day, r.slot.index))
    report.n_records = len(out)
    return out


@dataclass
class Design:
    """Response vector and covariate matrix for one ``X -> Y`` model.

    Column 0 of ``exog`` is the intercept. Rows are sorted by cluster
    (ego), then day, then slot.
    """

    endog: np.ndarray
    exog: np.ndarray
    terms: tuple[str, ...]
    cluster: np.ndarray
    day: np.ndarray
    slot: np.ndarray
    state: str = ""
    from_level: Level | None = None
    to_level: Level | None = None

    @property
    def n_rows(self) -> int:
        return len(self.endog)

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.cluster))

    def select(self, terms: Sequence[str]) -> "Design":
        """Sub-design keeping ``terms`` (intercept always first)."""
        terms = tuple(t for t in self.terms if t in set(terms) or t == INTERCEPT)
        idx = [self.terms.index(t) for t in terms]
        return Design(
            self.endog, self.exog[:, idx], terms, self.cluster, self.day, self.slot,
            self.state, self.from_level, self.to_level,
        )

    def rows(self) -> Iterator[DesignRow]:
        names = [t for t in self.terms if t != INTERCEPT]
        cols = [self.terms.index(t) for t in names]
        for i in range(self.n_rows):
            yield DesignRow(
                int(self.endog[i]),
                {n: float(self.exog[i, c]) for n, c in zip(names, cols)},
                str(self.cluster[i]),
                (int(self.day[i]), int(self.slot[i])),
            )


def build_design(
    records: Sequence[TransitionRecord],
    from_level: Level,
    to_level: Level,
    min_rows: int = 30,
) -> Design:
    """Binary design for ``from_level -> to_level``.

    Records starting elsewhere are ignored; the response is 1 iff the
    record ends at ``to_level``.

    Raises
    ------
    InsufficientData
        Fewer than ``min_rows`` records start at ``from_level``.
    """
    X, Y = Level.parse(from_level), Level.parse(to_level)
    rows = sorted((r for r in records if r.from_level == X), key=lambda r: (r.ego_id, r.day, r.slot.index))
    state = rows[0].state if rows else ""
    if len(rows) < min_rows:
        raise InsufficientData(f"{state} {X.name}->{Y.name}: {len(rows)} rows < {min_rows}")
    n = len(rows)
    exog = np.empty((n, len(ALL_TERMS)))
    exog[:, 0] = 1.0
    for i, r in enumerate(rows):
        cov = r.covariates()
        exog[i, 1:] = [cov[t] for t in TERMS]
    if not np.all(np.isfinite(exog)):
        raise ValueError("non-finite covariate")
    endog = np.fromiter((r.to_level == Y for r in rows), dtype=float, count=n)
    return Design(
        endog,
        exog,
        ALL_TERMS,
        np.array([r.ego_id for r in rows], dtype=str),
        np.array([r.day for r in rows], dtype=np.int64),
        np.array([r.slot.index for r in rows], dtype=np.int64),
        state,
        X,
        Y,
    )


def count_transitions(records: Iterable[TransitionRecord]) -> np.ndarray:
    """3x3 counts, rows = from level, columns = to level (L, N, H)."""
    counts = np.zeros((3, 3), dtype=np.int64)
    for r in records:
        counts[int(r.from_level), int(r.to_level)] += 1
    return counts


@dataclass
class TransitionSummary:
    counts: dict[str, np.ndarray]
    summary: dict[tuple[Level, Level], dict[str, float]]
    to_level_pct: dict[str, tuple[float, float, float]]
    to_level_share: dict[str, tuple[float, float, float]]


def to_level_percentages(counts: np.ndarray, convention: str = "reported") -> tuple[float, float, float]:
    """Percentage of transitions ending at L, N and H.

    ``convention="share"`` divides each to-level total by the grand total.
    ``convention="reported"`` reproduces the published per-state table:
    the denominator for target N omits the L->L cell, and the denominator
    for target H omits both L->L and L->N.
    """
    c = np.asarray(counts, dtype=float)
    to = c.sum(axis=0)
    total = c.sum()
    if convention == "share":
        den = np.array([total, total, total])
    elif convention == "reported":
        den = np.array([total, total - c[0, 0], total - c[0, 0] - c[0, 1]])
    else:
        raise ValueError(f"unknown convention {convention!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(den > 0, 100.0 * to / den, np.nan)
    return tuple(float(v) for v in pct)


def transition_count_table(per_state: Mapping[str, np.ndarray | Sequence[TransitionRecord]]) -> TransitionSummary:
    """Per-state 3x3 counts and the cross-state max/min/median/mean per cell."""
    counts = {}
    for state, value in per_state.items():
        arr = np.asarray(value) if isinstance(value, np.ndarray) or _is_matrix(value) else count_transitions(value)
        if arr.shape != (3, 3):
            raise ValueError(f"{state}: counts must be 3x3")
        counts[state] = arr.astype(np.int64)
    summary = {}
    stack = np.stack(list(counts.values())) if counts else np.zeros((0, 3, 3))
    for x in LEVELS:
        for y in LEVELS:
            cell = stack[:, int(x), int(y)]
            summary[(x, y)] = {
                "max": float(cell.max()) if cell.size else np.nan,
                "min": float(cell.min()) if cell.size else np.nan,
                "median": float(np.median(cell)) if cell.size else np.nan,
                "mean": float(cell.mean()) if cell.size else np.nan,
            }
    return TransitionSummary(
        counts,
        summary,
        {s: to_level_percentages(c, "reported") for s, c in counts.items()},
        {s: to_level_percentages(c, "share") for s, c in counts.items()},
    )


def _is_matrix(value) -> bool:
    try:
        return np.asarray(value).shape == (3, 3) and not isinstance(value[0], TransitionRecord)
    except (TypeError, IndexError):
        return False

"""Diurnal-rhythm diagnostics: one-way ANOVA and Tukey HSD comparisons.

Used to check whether state scores differ by period of day or day of
week. The results inform but never change the model specification.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .config import PERIODS, StudyConfig
from .scoring import StateScore

WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
GROUPINGS = ("PeriodOfDay", "DayOfWeek")


class DegenerateGrouping(ValueError):
    """Fewer than two groups, or a group with fewer than two observations."""


@dataclass(frozen=True)
class AnovaResult:
    grouping: str
    state: str
    F: float
    p: float
    df_between: float
    df_within: float
    means: dict
    welch: bool = False


@dataclass(frozen=True)
class TukeyComparison:
    state: str
    group_a: str
    group_b: str
    diff: float  # mean(a) - mean(b)
    p_adj: float
    lower: float
    upper: float
    p_unadjusted: float
    grouping: str = ""


def _groups(values, groups, order=None) -> tuple[list, list[np.ndarray]]:
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    if values.shape != groups.shape:
        raise ValueError("values and groups must have the same length")
    labels = list(order) if order is not None else sorted(set(groups.tolist()))
    labels = [g for g in labels if np.any(groups == g)]
    data = [values[groups == g] for g in labels]
    if len(data) < 2:
        raise DegenerateGrouping("need at least two groups")
    small = [str(g) for g, d in zip(labels, data) if d.size < 2]
    if small:
        raise DegenerateGrouping(f"groups with fewer than two observations: {', '.join(small)}")
    return labels, data


def anova_by_group(
    values: Sequence[float],
    groups: Sequence,
    state: str = "",
    grouping: str = "PeriodOfDay",
    order: Sequence | None = None,
    welch: bool = False,
) -> AnovaResult:
    """One-way ANOVA of ``values`` across ``groups``.

    Parameters
    ----------
    order : sequence, optional
        Group order for the reported means (default: sorted labels).
    welch : bool
        Use Welch's heteroscedastic F test instead of the classical
        equal-variance one.

    Raises
    ------
    DegenerateGrouping
    """
    labels, data = _groups(values, groups, order)
    k = len(data)
    n = np.array([d.size for d in data], dtype=float)
    m = np.array([d.mean() for d in data])
    means = {str(g): float(v) for g, v in zip(labels, m)}
    if welch:
        var = np.array([d.var(ddof=1) for d in data])
        if np.any(var == 0):
            raise DegenerateGrouping("Welch ANOVA needs positive within-group variance")
        w = n / var
        mw = np.sum(w * m) / w.sum()
        a = np.sum(w * (m - mw) ** 2) / (k - 1)
        lam = np.sum((1 - w / w.sum()) ** 2 / (n - 1))
        b = 1 + 2 * (k - 2) / (k**2 - 1) * lam
        F = a / b
        df1, df2 = k - 1, (k**2 - 1) / (3 * lam)
    else:
        grand = np.concatenate(data).mean()
        ssb = float(np.sum(n * (m - grand) ** 2))
        ssw = float(sum(np.sum((d - d.mean()) ** 2) for d in data))
        df1, df2 = k - 1, n.sum() - k
        if ssw == 0:
            if ssb == 0:
                raise DegenerateGrouping("all values are identical")
            F = np.inf
        else:
            F = (ssb / df1) / (ssw / df2)
    p = float(stats.f.sf(F, df1, df2)) if np.isfinite(F) else 0.0
    return AnovaResult(grouping, state, float(F), p, float(df1), float(df2), means, welch)


def tukey_hsd(
    values: Sequence[float],
    groups: Sequence,
    state: str = "",
    order: Sequence | None = None,
    confidence: float = 0.95,
    grouping: str = "",
) -> list[TukeyComparison]:
    """Tukey-Kramer pairwise comparisons of group means.

    Pairs follow ``order`` (default sorted labels): for groups ``g_i`` and
    ``g_j`` with ``i < j`` the difference is ``mean(g_i) - mean(g_j)``.
    The unadjusted two-sided t-test p-value (pooled variance) is reported
    alongside the adjusted one.
    """
    labels, data = _groups(values, groups, order)
    k = len(data)
    n = np.array([d.size for d in data], dtype=float)
    m = np.array([d.mean() for d in data])
    df = n.sum() - k
    mse = float(sum(np.sum((d - d.mean()) ** 2) for d in data)) / df
    qcrit = float(stats.studentized_range.ppf(confidence, k, df))
    out = []
    for i, j in itertools.combinations(range(k), 2):
        diff = float(m[i] - m[j])
        se = np.sqrt(mse / 2 * (1 / n[i] + 1 / n[j]))
        if se == 0:
            p_adj = 1.0 if diff == 0 else 0.0
            p_raw = p_adj
        else:
            q = abs(diff) / se
            p_adj = float(np.clip(stats.studentized_range.sf(q, k, df), 0.0, 1.0))
            t = abs(diff) / (se * np.sqrt(2))
            p_raw = float(2 * stats.t.sf(t, df))
        half = float(qcrit * se)
        out.append(
            TukeyComparison(state, str(labels[i]), str(labels[j]), diff, p_adj, diff - half, diff + half, p_raw, grouping)
        )
    return out


def diurnal_groups(
    scores: Iterable[StateScore], config: StudyConfig, grouping: str = "PeriodOfDay"
) -> dict[str, tuple[np.ndarray, np.ndarray, tuple[str, ...]]]:
    """Split state scores into ``(values, group labels, label order)`` per state."""
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    by_state: dict[str, tuple[list, list]] = {}
    for s in scores:
        vals, labs = by_state.setdefault(s.state, ([], []))
        vals.append(s.score)
        if grouping == "PeriodOfDay":
            labs.append(s.period.value)
        else:
            labs.append(WEEKDAYS[config.day_date(s.day).weekday()])
    order = tuple(p.value for p in PERIODS) if grouping == "PeriodOfDay" else WEEKDAYS[:5]
    return {st: (np.array(v, dtype=float), np.array(g), order) for st, (v, g) in by_state.items()}


def diurnal_diagnostics(
    scores: Iterable[StateScore], config: StudyConfig, welch: bool = False
) -> tuple[list[AnovaResult], list[TukeyComparison]]:
    """ANOVA and Tukey tables by period of day and by day of week, per state."""
    scores = list(scores)
    anovas, tukeys = [], []
    for grouping in GROUPINGS:
        for state, (v, g, order) in sorted(diurnal_groups(scores, config, grouping).items()):
            try:
                anovas.append(anova_by_group(v, g, state, grouping, order, welch))
                tukeys.extend(tukey_hsd(v, g, state, order, grouping=grouping))
            except DegenerateGrouping:
                continue
    return anovas, tukeys

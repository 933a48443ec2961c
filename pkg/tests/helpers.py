"""Shared fixtures: a hand-enumerated three-participant corpus and oracles."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from sociodyn.config import DEFAULT_STATES, Level, StudyConfig

EXTRAVERSION = DEFAULT_STATES[0]
L, N, H = Level.L, Level.N, Level.H

# one state, one trait, two study days (Mon 5 and Tue 6 March 2012, UTC+1)
FIXTURE_CONFIG = StudyConfig(
    states=(EXTRAVERSION,),
    trait_names=("extraversion",),
    n_days=2,
    participants=("p1", "p2", "p3"),
)

# intended level of every accepted survey; 5 per level so the tertile cuts
# fall between groups
FIXTURE_LEVELS = {
    ("p1", 1, "Morning"): L, ("p1", 1, "Midday"): N, ("p1", 1, "Afternoon"): H,
    ("p2", 1, "Morning"): N, ("p2", 1, "Midday"): N,
    ("p3", 1, "Morning"): H,
    ("p1", 2, "Morning"): L, ("p1", 2, "Midday"): L, ("p1", 2, "Afternoon"): N,
    ("p2", 2, "Morning"): H, ("p2", 2, "Midday"): H, ("p2", 2, "Afternoon"): L,
    ("p3", 2, "Morning"): L, ("p3", 2, "Midday"): N, ("p3", 2, "Afternoon"): H,
}
_SCORES = {L: [1.0, 1.5, 2.0, 2.5, 3.0], N: [3.5, 4.0, 4.0, 4.5, 4.5], H: [5.0, 5.5, 6.0, 6.5, 7.0]}
_TRIGGER_UTC = {"Morning": "10:00", "Midday": "13:00", "Afternoon": "16:00"}
_DATES = {1: "2012-03-05", 2: "2012-03-06"}


def _items(score: float) -> tuple[int, int]:
    """(tipi1, tipi6) with mean(tipi1, 8 - tipi6) == score."""
    standard = math.ceil(score)
    recoded = round(2 * score) - standard
    return standard, 8 - recoded


def fixture_scores() -> dict[tuple, float]:
    pools = {lv: list(v) for lv, v in _SCORES.items()}
    return {key: pools[lv].pop(0) for key, lv in FIXTURE_LEVELS.items()}


def survey_rows() -> list[str]:
    rows = []
    for (pid, day, period), score in fixture_scores().items():
        a, b = _items(score)
        stamp = f"{_DATES[day]}T{_TRIGGER_UTC[period][:2]}:10:00Z"
        rows += [f"{pid},{day},{period},{stamp},tipi1,{a}", f"{pid},{day},{period},{stamp},tipi6,{b}"]
    # p3 answers day-1 midday three hours late: rejected by the response window
    rows += ["p3,1,Midday,2012-03-05T16:00:00Z,tipi1,4", "p3,1,Midday,2012-03-05T16:00:00Z,tipi6,4"]
    # p2 resubmits day-2 midday later: the earlier submission is kept
    rows += ["p2,2,Midday,2012-03-06T13:40:00Z,tipi1,1", "p2,2,Midday,2012-03-06T13:40:00Z,tipi6,7"]
    return rows


def ir_rows() -> list[str]:
    def hits(ego, alter, day, start, n):
        h, m = start.split(":")
        return [f"{ego},{alter},{_DATES[day]}T{h}:{m}:{s:02d}Z" for s in range(n)]

    rows = []
    rows += hits("p1", "p2", 1, "10:30", 5)  # morning -> midday window
    rows += hits("p1", "p3", 1, "11:00", 2)
    rows += hits("p2", "p1", 1, "12:00", 3)
    rows += hits("p1", "p3", 1, "14:00", 4)  # p3 has no valid midday survey
    rows += hits("p1", "p9", 2, "10:30", 1)  # unknown alter, dropped
    rows += hits("p2", "p1", 2, "13:00", 1)  # exactly at the midday trigger
    rows += hits("p3", "p2", 2, "11:00", 10)
    rows += hits("p3", "p1", 2, "16:30", 1)  # after the last trigger
    return rows


def trait_rows() -> list[str]:
    return ["p1,Begin,extraversion,2", "p2,Begin,extraversion,4", "p3,Begin,extraversion,6"]


def write_fixture(directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "ir_log.csv").write_text("ego_id,alter_id,timestamp_utc\n" + "\n".join(ir_rows()) + "\n")
    (directory / "surveys.csv").write_text(
        "participant_id,day,period,submitted_at_utc,item_code,value\n" + "\n".join(survey_rows()) + "\n"
    )
    (directory / "traits.csv").write_text("participant_id,wave,trait,raw_score\n" + "\n".join(trait_rows()) + "\n")
    return directory


Z = math.sqrt(1.5)  # z of raw 6 in cohort {2, 4, 6}, population SD

# (ego, day, slot index) -> (from, to, (L, N, H) intensity, trait z, period dummy)
FIXTURE_RECORDS = {
    ("p1", 1, 0): (L, N, (0.0, 5.0, 2.0), -Z, 0),
    ("p2", 1, 0): (N, N, (3.0, 0.0, 0.0), 0.0, 0),
    ("p1", 2, 0): (L, L, (0.0, 0.0, 0.0), -Z, 0),
    ("p1", 2, 1): (L, N, (0.0, 0.0, 0.0), -Z, 1),
    ("p2", 2, 0): (H, H, (0.0, 0.0, 0.0), 0.0, 0),
    ("p2", 2, 1): (H, L, (1.0, 0.0, 0.0), 0.0, 1),
    ("p3", 2, 0): (L, N, (0.0, 0.0, 10.0), Z, 0),
    ("p3", 2, 1): (N, H, (0.0, 0.0, 0.0), Z, 1),
}


def fixture_counts() -> np.ndarray:
    c = np.zeros((3, 3), dtype=np.int64)
    for x, y, *_ in FIXTURE_RECORDS.values():
        c[int(x), int(y)] += 1
    return c


# ------------------------------------------------------------- oracles


def irls_logistic(X: np.ndarray, y: np.ndarray, tol: float = 1e-12, maxiter: int = 200) -> np.ndarray:
    """Plain Newton/IRLS logistic regression, written independently of the package."""
    beta = np.zeros(X.shape[1])
    for _ in range(maxiter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        z = eta + (y - mu) / w
        XtW = X.T * w
        new = np.linalg.solve(XtW @ X, XtW @ z)
        if np.max(np.abs(new - beta)) < tol:
            return new
        beta = new
    return beta


# published per-state counts, rows L->L ... H->H; columns are the seven states
PAPER_COUNTS = np.array([
    [79, 100, 167, 147, 107, 91, 89],
    [77, 98, 83, 72, 97, 81, 79],
    [35, 25, 21, 10, 14, 18, 13],
    [59, 90, 112, 79, 102, 95, 95],
    [240, 254, 173, 187, 246, 217, 268],
    [99, 51, 47, 57, 60, 65, 46],
    [44, 25, 18, 20, 21, 13, 25],
    [76, 71, 50, 67, 45, 81, 42],
    [115, 110, 153, 185, 132, 163, 167],
])
PAPER_STATES = ("extraversion", "agreeableness", "conscientiousness", "emotional_stability", "creativity", "hpa", "lna")


def paper_tables():
    return {s: PAPER_COUNTS[:, j].reshape(3, 3) for j, s in enumerate(PAPER_STATES)}

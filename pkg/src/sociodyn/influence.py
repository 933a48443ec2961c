"""Effect taxonomy over fitted transition models.

For an ego moving ``X -> Y`` and contact intensity with alters at level
``Z``, the sign of the marginal slope of ``P(X -> Y)`` in that intensity
determines one of four effects:

=========  ===============================  ===================
effect     alters                           grouping
=========  ===============================  ===================
Attraction Z != X, ego drawn towards Z       Adaptation
Repulsion  Z != X, ego kept away from Z      Complementarity
Inertia    Z == X, ego kept at X             Adaptation
Push       Z == X, ego pushed away from X    Complementarity
=========  ===============================  ===================
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .config import LEVELS, Level
from .gee import ModelFit

TRAIT_POINTS = {"LowTrait": -1.0, "HighTrait": 1.0, "Pooled": 0.0}
GROUPING = {
    "Attraction": "Adaptation",
    "Inertia": "Adaptation",
    "Repulsion": "Complementarity",
    "Push": "Complementarity",
    "None": "None",
}
SHORT = {"Attraction": "T", "Repulsion": "R", "Inertia": "I", "Push": "P"}


@dataclass(frozen=True)
class EffectLabel:
    state: str
    from_level: Level
    to_level: Level
    alter_level: Level
    trait_class: str
    slope_sign: str  # "+", "-" or "0"
    effect: str
    grouping: str

    def as_dict(self) -> dict:
        return {
            "state": self.state,
            "from": self.from_level.name,
            "to": self.to_level.name,
            "alter_level": self.alter_level.name,
            "trait_class": self.trait_class,
            "slope_sign": self.slope_sign,
            "effect": self.effect,
            "grouping": self.grouping,
        }


@dataclass
class TransitionDiagram:
    state: str
    nodes: tuple[str, ...] = ("L", "N", "H")
    arrows: dict[tuple[Level, Level], list[tuple[Level, str, str]]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "state": self.state,
            "nodes": list(self.nodes),
            "arrows": [
                {
                    "from": x.name,
                    "to": y.name,
                    "conditions": [{"alter_level": z.name, "trait_class": tc, "direction": d} for z, tc, d in conds],
                }
                for (x, y), conds in sorted(self.arrows.items())
            ],
        }


@dataclass(frozen=True)
class ContagionVerdict:
    state: str
    level: Level
    trait_class: str
    verdict: str  # Contagion | ConditionalContagion | NotContagion
    failing: str = ""


def _relevant(value: float, threshold: float | None) -> float:
    if threshold is None:
        return value
    return value if abs(value) >= threshold else 0.0


def marginal_slope(
    fit: ModelFit | None,
    alter_level: Level,
    trait_class: str = "Pooled",
    threshold: float | None = 0.001,
    trait_points: Mapping[str, float] = TRAIT_POINTS,
) -> tuple[float, str]:
    """Slope of the log-odds in the intensity with alters at ``alter_level``.

    The slope is ``b_Z + b_{T*Z} * t`` with ``t`` the trait point of
    ``trait_class`` (-1, +1, or 0 when pooled). Terms absent from the fit
    count as 0, coefficients whose magnitude is below ``threshold`` are
    zeroed, and so is the resulting slope. ``threshold=None`` disables the
    relevance filter. A missing or null fit has slope 0.

    Returns
    -------
    slope : float
    sign : {"+", "-", "0"}
    """
    if fit is None or fit.is_null:
        return 0.0, "0"
    z = Level.parse(alter_level).name
    t = trait_points[trait_class]
    main = _relevant(fit.coef(z), threshold)
    inter = _relevant(fit.coef(f"T*{z}"), threshold)
    slope = _relevant(main + inter * t, threshold)
    if slope > 0:
        return slope, "+"
    if slope < 0:
        return slope, "-"
    return 0.0, "0"


def classify_effect(from_level: Level, to_level: Level, alter_level: Level, slope_sign: str) -> str:
    """Name the effect of contact with ``alter_level`` alters on ``X -> Y``.

    Alters at a level different from the ego's (``Z != X``): a rising
    probability of moving to the side of ``Z`` (or a falling probability of
    staying or moving to the far side) is Attraction; the opposite is
    Repulsion. Alters at the ego's level (``Z == X``): a rising probability
    of staying (or falling probability of leaving) is Inertia, the opposite
    Push. A zero slope gives ``"None"``.
    """
    X, Y, Z = Level.parse(from_level), Level.parse(to_level), Level.parse(alter_level)
    if slope_sign not in ("+", "-"):
        return "None"
    up = slope_sign == "+"
    if Z == X:
        staying = Y == X
        return "Inertia" if up == staying else "Push"
    toward = (Y > X) == (Z > X) and Y != X
    return "Attraction" if up == toward else "Repulsion"


def label(state, X, Y, Z, trait_class, sign) -> EffectLabel:
    effect = classify_effect(X, Y, Z, sign)
    return EffectLabel(state, Level.parse(X), Level.parse(Y), Level.parse(Z), trait_class, sign, effect, GROUPING[effect])


def has_trait_interaction(fit: ModelFit | None, threshold: float | None = 0.001) -> bool:
    if fit is None or fit.is_null:
        return False
    return any(_relevant(fit.coef(f"T*{z.name}"), threshold) != 0 for z in LEVELS)


def classify_fit(
    fit: ModelFit | None,
    state: str,
    from_level: Level,
    to_level: Level,
    threshold: float | None = 0.001,
    mode: str = "auto",
) -> list[EffectLabel]:
    """Effect labels for every alter level of one fitted transition.

    ``mode="auto"`` emits pooled labels when no trait interaction survives
    and LowTrait/HighTrait labels otherwise; ``"pooled"`` and ``"trait"``
    force one form.
    """
    if mode == "auto":
        mode = "trait" if has_trait_interaction(fit, threshold) else "pooled"
    classes = ("Pooled",) if mode == "pooled" else ("LowTrait", "HighTrait")
    out = []
    for z in LEVELS:
        for tc in classes:
            _, sign = marginal_slope(fit, z, tc, threshold)
            out.append(label(state, from_level, to_level, z, tc, sign))
    return out


def classify_state(
    fits: Mapping[tuple[Level, Level], ModelFit | None],
    state: str,
    threshold: float | None = 0.001,
    mode: str = "auto",
) -> list[EffectLabel]:
    out = []
    for x in LEVELS:
        for y in LEVELS:
            out.extend(classify_fit(fits.get((x, y)), state, x, y, threshold, mode))
    return out


def _conditions_hold(fits, V: Level, trait_class: str, threshold) -> tuple[bool, str]:
    n_to_v = fits.get((Level.N, V))
    for z in LEVELS:
        _, sign = marginal_slope(n_to_v, z, trait_class, threshold)
        if z == V and sign != "+":
            return False, f"N->{V.name} not increased by contact with {z.name} alters"
        if z != V and sign != "0":
            return False, f"N->{V.name} affected by contact with {z.name} alters"
    v_to_n = fits.get((V, Level.N))
    for z in LEVELS:
        _, sign = marginal_slope(v_to_n, z, trait_class, threshold)
        if sign != "0":
            return False, f"recovery {V.name}->N depends on contact with {z.name} alters"
    return True, ""


def sisa_contagion_test(
    fits: Mapping[tuple[Level, Level], ModelFit | None],
    level: Level,
    state: str = "",
    trait_class: str | None = None,
    threshold: float | None = 0.001,
) -> ContagionVerdict:
    """Check the two SISa-style contagion conditions for level ``V``.

    (a) ``N -> V`` responds, positively, to contact with ``V`` alters only;
    (b) recovery ``V -> N`` does not respond to contact at all.

    With ``trait_class=None`` the conditions are evaluated at the pooled,
    low-trait and high-trait points: holding at all three gives
    ``Contagion``, holding for exactly one trait class gives
    ``ConditionalContagion`` scoped to it. Passing a trait class evaluates
    that point only. Missing fits count as "no effect".
    """
    V = Level.parse(level)
    if V == Level.N:
        raise ValueError("contagion is tested for level L or H")
    if trait_class is not None:
        ok, why = _conditions_hold(fits, V, trait_class, threshold)
        if ok:
            verdict = "Contagion" if trait_class == "Pooled" else "ConditionalContagion"
            return ContagionVerdict(state, V, trait_class, verdict)
        return ContagionVerdict(state, V, trait_class, "NotContagion", why)
    results = {tc: _conditions_hold(fits, V, tc, threshold) for tc in ("Pooled", "LowTrait", "HighTrait")}
    if all(ok for ok, _ in results.values()):
        return ContagionVerdict(state, V, "Pooled", "Contagion")
    holding = [tc for tc in ("LowTrait", "HighTrait") if results[tc][0]]
    if len(holding) == 1:
        return ContagionVerdict(state, V, holding[0], "ConditionalContagion")
    failing = results["Pooled"][1] or results["LowTrait"][1] or results["HighTrait"][1]
    return ContagionVerdict(state, V, "Pooled", "NotContagion", failing)


@dataclass
class StateSummary:
    diagram: TransitionDiagram
    matrix: dict[tuple[Level, Level, str], set[str]]
    labels: list[EffectLabel]
    labeled_transitions: int


def build_diagram(
    fits: Mapping[tuple[Level, Level], ModelFit | None],
    state: str,
    threshold: float | None = 0.001,
    mode: str = "auto",
) -> StateSummary:
    """Transition diagram and adaptation/complementarity matrix for a state.

    Matrix keys are ``(ego level X, alter level Z, trait class)`` with trait
    class LowTrait or HighTrait; pooled labels fill both classes. Cells
    hold ``"A(T)"``-style codes (grouping initial plus effect letter).
    """
    labels = classify_state(fits, state, threshold, mode)
    diagram = TransitionDiagram(state)
    matrix: dict[tuple[Level, Level, str], set[str]] = {
        (x, z, tc): set() for x in LEVELS for z in LEVELS for tc in ("LowTrait", "HighTrait")
    }
    labeled = set()
    for lab in labels:
        if lab.effect == "None":
            continue
        labeled.add((lab.from_level, lab.to_level))
        arrow = "up" if lab.slope_sign == "+" else "down"
        diagram.arrows.setdefault((lab.from_level, lab.to_level), []).append((lab.alter_level, lab.trait_class, arrow))
        code = f"{lab.grouping[0]}({SHORT[lab.effect]})"
        classes = ("LowTrait", "HighTrait") if lab.trait_class == "Pooled" else (lab.trait_class,)
        for tc in classes:
            matrix[(lab.from_level, lab.alter_level, tc)].add(code)
    return StateSummary(diagram, matrix, labels, len(labeled))


def coverage(summaries: Iterable[StateSummary], n_states: int | None = None) -> tuple[int, int]:
    """Labeled transition types over all ``9 * n_states`` types.

    A transition with several labels (e.g. one per trait class) counts once.
    """
    summaries = list(summaries)
    n = len(summaries) if n_states is None else n_states
    return sum(s.labeled_transitions for s in summaries), 9 * n


def label_tallies(summaries: Iterable[StateSummary]) -> dict[str, int]:
    """Counts of non-None labels, one per (state, X, Y, Z, trait class)."""
    out: dict[str, int] = {}
    for s in summaries:
        for lab in s.labels:
            if lab.effect != "None":
                out[lab.effect] = out.get(lab.effect, 0) + 1
    return out

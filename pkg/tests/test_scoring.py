import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sociodyn.config import DEFAULT_STATES, Level, StudyConfig
from sociodyn.data_model import TraitSurvey
from sociodyn.scoring import (
    DegenerateDistribution,
    QuantileCuts,
    ZeroVariance,
    assign_level,
    fit_quantile_cuts,
    normalize_traits,
    quantize,
    recode_reverse,
    score_big5_state,
    score_panas_state,
    skewness_screen,
)

STATES = {s.name: s for s in DEFAULT_STATES}
EXTRA = STATES["extraversion"]


def test_tipi_reverse_recode():
    assert score_big5_state({"tipi1": 6, "tipi6": 2}, EXTRA) == 6.0
    assert score_big5_state({"tipi1": 4, "tipi6": 4}, EXTRA) == 4.0
    assert score_big5_state({"tipi1": 4}, EXTRA) is None


def test_panas_means():
    assert score_panas_state({"panas_enthusiastic": 3, "panas_interested": 3, "panas_active": 3}, STATES["hpa"]) == 3.0
    assert score_panas_state({"panas_lonely": 1, "panas_isolated": 5}, STATES["lna"]) == 3.0
    assert score_panas_state({"panas_lonely": 1}, STATES["lna"]) is None


def test_hand_scored_batteries():
    # ten surveys scored by hand: (tipi3, tipi8) -> conscientiousness
    pairs = [(1, 7), (7, 1), (4, 4), (5, 3), (2, 6), (6, 5), (3, 2), (7, 7), (1, 1), (5, 6)]
    hand = [1.0, 7.0, 4.0, 5.0, 2.0, 4.5, 4.5, 4.0, 4.0, 3.5]
    got = [score_big5_state({"tipi3": a, "tipi8": b}, STATES["conscientiousness"]) for a, b in pairs]
    assert got == hand


def test_quantile_cuts_uniform():
    cuts = fit_quantile_cuts(np.arange(1, 101))
    assert cuts.q33 == pytest.approx(33.67) and cuts.q66 == pytest.approx(66.34)


def test_quantile_cuts_symmetric():
    # exact mirror of the 33rd percentile is the 67th; q66 is one percentile off
    x = np.random.default_rng(3).standard_normal(5000)
    x = np.concatenate([x, -x])
    c = fit_quantile_cuts(x - np.median(x))
    assert c.q33 == pytest.approx(-np.percentile(x, 67), abs=1e-12)
    assert c.q33 == pytest.approx(-c.q66, abs=0.03)


def test_constant_scores_degenerate():
    with pytest.raises(DegenerateDistribution) as err:
        fit_quantile_cuts([2.5] * 10)
    assert err.value.value == 2.5


def test_boundary_ties_go_down():
    cuts = QuantileCuts("s", -1.0, 1.0)
    assert assign_level(-1.0, cuts) == Level.L
    assert assign_level(1.0, cuts) == Level.N
    assert assign_level(1.0000001, cuts) == Level.H


def test_uniform_level_shares():
    x = np.random.default_rng(0).uniform(size=10_000)
    cuts = fit_quantile_cuts(x)
    shares = np.bincount([assign_level(v, cuts) for v in x], minlength=3) / x.size
    assert np.all(np.abs(shares - 0.34) <= 0.03)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=60).filter(lambda v: len(set(v)) > 1))
def test_quantile_sandwich_and_monotone(values):
    x = np.array(values)
    c = fit_quantile_cuts(x)
    n = x.size
    assert np.mean(x <= c.q33) >= 0.33 - 1 / n
    assert np.mean(x <= c.q66) >= 0.66 - 1 / n
    lv = [assign_level(v, c) for v in np.sort(x)]
    assert all(a <= b for a, b in zip(lv, lv[1:]))


@given(st.floats(1, 7))
def test_recode_involution(v):
    assert recode_reverse(recode_reverse(v, 1, 7), 1, 7) == pytest.approx(v)


def _traits(raws, name="extraversion"):
    return [TraitSurvey(f"p{i}", {name: r}) for i, r in enumerate(raws)]


def test_trait_z_hand_value():
    prof = {p.participant_id: p for p in normalize_traits(_traits([2, 4, 6]), names=["extraversion"])}
    assert prof["p2"].z == pytest.approx(1.224744871, abs=1e-9)
    assert prof["p2"].trait_class == "HighTrait"
    assert prof["p1"].z == 0 and prof["p1"].trait_class == "MidTrait"
    assert prof["p0"].trait_class == "LowTrait"


def test_trait_zero_variance_names_trait():
    with pytest.raises(ZeroVariance, match="extraversion"):
        normalize_traits(_traits([3, 3]), names=["extraversion"])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1, 7), min_size=2, max_size=40).filter(lambda v: np.std(v) > 1e-3))
def test_trait_z_standardized(raws):
    z = np.array([p.z for p in normalize_traits(_traits(raws), names=["extraversion"])])
    assert abs(z.mean()) < 1e-12
    assert_allclose(z.std(), 1.0, atol=1e-12)


def test_skewness_screen():
    rng = np.random.default_rng(1)
    skewed = np.where(rng.random(500) < 0.8, 1.0, rng.integers(1, 6, 500))
    assert not skewness_screen(skewed).keep
    assert skewness_screen(rng.uniform(size=500)).keep


def test_seven_states_kept_on_synthetic_corpus():
    from sociodyn.scoring import build_levels
    from sociodyn.simulator import ScenarioConfig, run_scenario

    corpus = run_scenario(ScenarioConfig(seed=7))
    table = build_levels(corpus.surveys, corpus.config.study)
    assert sorted(table.kept_states) == sorted(StudyConfig().trait_names)
    assert not table.screens["hna"].keep and not table.screens["lpa"].keep


def test_quantize_centers_by_median():
    from sociodyn.scoring import StateScore
    from sociodyn.config import Period

    scores = [StateScore(f"p{i}", 1, Period.Morning, "extraversion", float(v)) for i, v in enumerate(range(10, 19))]
    table = quantize(scores, StudyConfig(states=(EXTRA,)))
    centered = sorted(a.score for a in table.assignments)
    assert centered[4] == 0.0
    assert [a.level for a in sorted(table.assignments, key=lambda a: a.score)].count(Level.L) == 3
    assert math.isclose(table.cuts["extraversion"].q33, np.percentile(np.arange(-4, 5), 33))

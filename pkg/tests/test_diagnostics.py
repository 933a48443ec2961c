import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sociodyn.diagnostics import DegenerateGrouping, anova_by_group, diurnal_diagnostics, tukey_hsd
from sociodyn.scoring import score_surveys
from sociodyn.simulator import ContactModel, ScenarioConfig, run_scenario

A, B, C = [1.0, 2, 3, 4, 5], [2.0, 3, 4, 5, 6], [4.0, 5, 6, 7, 8]
VALUES = np.array(A + B + C)
GROUPS = np.repeat(["a", "b", "c"], 5)


def test_anova_hand_fixture():
    # grand mean 13/3, SSB = 70/3, SSW = 30, df = (2, 12)
    res = anova_by_group(VALUES, GROUPS)
    assert abs(res.F - 14 / 3) < 1e-10
    assert res.p == pytest.approx(stats.f.sf(14 / 3, 2, 12), rel=1e-12)
    assert res.means == {"a": 3.0, "b": 4.0, "c": 6.0}
    assert (res.df_between, res.df_within) == (2.0, 12.0)


def test_anova_zero_f():
    v = np.array([1.0, 2, 3, 1, 2, 3, 3, 2, 1])
    res = anova_by_group(v, np.repeat(["x", "y", "z"], 3))
    assert res.F == 0.0 and res.p == 1.0


def test_anova_degenerate():
    with pytest.raises(DegenerateGrouping):
        anova_by_group([1.0, 2.0], ["a", "a"])
    with pytest.raises(DegenerateGrouping):
        anova_by_group([1.0, 2.0, 3.0], ["a", "a", "b"])
    with pytest.raises(DegenerateGrouping):
        anova_by_group([1.0] * 4, ["a", "a", "b", "b"])


@settings(deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=9, max_size=30), st.floats(-1e3, 1e3), st.integers(0, 10_000))
def test_anova_matches_scipy_and_shift_invariant(vals, shift, seed):
    v = np.array(vals)
    g = np.random.default_rng(seed).permutation(np.arange(v.size) % 3)
    if any(np.ptp(v[g == k]) == 0 for k in range(3)):
        return
    res = anova_by_group(v, g)
    ref = stats.f_oneway(*(v[g == k] for k in range(3)))
    assert res.F == pytest.approx(ref.statistic, rel=1e-7, abs=1e-9)
    assert anova_by_group(v + shift, g).F == pytest.approx(res.F, rel=1e-6, abs=1e-8)


def test_welch_matches_oracle():
    oneway = pytest.importorskip("statsmodels.stats.oneway")
    rng = np.random.default_rng(4)
    v = np.concatenate([rng.normal(0, 1, 20), rng.normal(0.5, 3, 35), rng.normal(0.2, 0.5, 15)])
    g = np.repeat(["a", "b", "c"], [20, 35, 15])
    res = anova_by_group(v, g, welch=True)
    ref = oneway.anova_oneway(v, g, use_var="unequal")
    assert res.welch
    assert res.F == pytest.approx(ref.statistic, rel=1e-10)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-8)
    assert res.df_within == pytest.approx(ref.df[1], rel=1e-10)


def test_tukey_hand_and_sign():
    comps = {(c.group_a, c.group_b): c for c in tukey_hsd(VALUES, GROUPS)}
    assert comps[("a", "b")].diff == -1.0
    assert comps[("a", "c")].diff == -3.0
    assert comps[("b", "c")].diff == -2.0
    ordered = {(c.group_a, c.group_b): c.diff for c in tukey_hsd(VALUES, GROUPS, order=["c", "b", "a"])}
    assert ordered[("c", "a")] == 3.0
    for c in comps.values():
        assert 0 <= c.p_adj <= 1
        assert c.p_adj >= c.p_unadjusted
        assert c.lower < c.diff < c.upper


def test_tukey_identical_groups():
    (c,) = tukey_hsd([1.0, 2, 3, 1, 2, 3], ["x"] * 3 + ["y"] * 3)
    assert c.diff == 0 and c.p_adj == pytest.approx(1.0)


def test_tukey_matches_statsmodels():
    mc = pytest.importorskip("statsmodels.stats.multicomp")
    rng = np.random.default_rng(2)
    v = np.concatenate([rng.normal(0, 1, 30), rng.normal(0.6, 1, 25), rng.normal(0.1, 1, 40)])
    g = np.repeat(["a", "b", "c"], [30, 25, 40])
    ref = mc.pairwise_tukeyhsd(v, g)
    ours = tukey_hsd(v, g)
    # statsmodels reports mean(b) - mean(a)
    np.testing.assert_allclose([-c.diff for c in ours], ref.meandiffs, rtol=1e-10)
    np.testing.assert_allclose([c.p_adj for c in ours], ref.pvalues, atol=2e-3)


def period_scores(seed, shift=0.6, n_agents=60, n_days=10):
    cfg = ScenarioConfig(n_agents=n_agents, n_days=n_days, seed=seed, states=("extraversion",),
                         contacts=ContactModel(0.0), period_shift=shift)
    corpus = run_scenario(cfg)
    return score_surveys(corpus.surveys, cfg.study), cfg.study


def test_planted_period_shift_detected():
    scores, study = period_scores(1, n_agents=100, n_days=15)
    anovas, tukeys = diurnal_diagnostics(scores, study)
    period = next(a for a in anovas if a.grouping == "PeriodOfDay")
    assert period.p < 0.01
    assert period.means["Afternoon"] > period.means["Morning"]


def test_only_shifted_period_pairs_significant():
    hits = 0
    for r in range(10):
        scores, study = period_scores(100 + r)
        _, tukeys = diurnal_diagnostics(scores, study)
        sig = {(t.group_a, t.group_b) for t in tukeys if t.grouping == "PeriodOfDay" and t.p_adj < 0.05}
        hits += sig == {("Morning", "Afternoon"), ("Midday", "Afternoon")}
    assert hits >= 9

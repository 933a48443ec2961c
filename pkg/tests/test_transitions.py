import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from sociodyn.config import Level, Slot
from sociodyn.network import IntensityTriple
from sociodyn.pipeline import load_corpus, prepare
from sociodyn.transitions import (
    ExtractionReport,
    InsufficientData,
    TransitionRecord,
    build_design,
    count_transitions,
    extract_transitions,
    to_level_percentages,
    transition_count_table,
)

from helpers import FIXTURE_CONFIG, FIXTURE_RECORDS, fixture_counts, paper_tables, write_fixture

L, N, H = Level.L, Level.N, Level.H

def _record(x, y, ego="e", day=1, slot=Slot.MorningToMidday, inten=(0.0, 0.0, 0.0), t=0.0):
    return TransitionRecord(ego, day, slot, "s", x, y, IntensityTriple(*inten), t, slot.period_dummy)


def test_fixture_records_match_hand_enumeration(tmp_path):
    corpus = load_corpus(write_fixture(tmp_path), FIXTURE_CONFIG)
    _, levels, traits, windows, _ = prepare(corpus, FIXTURE_CONFIG)
    report = ExtractionReport("extraversion")
    recs = extract_transitions(levels, windows, traits, "extraversion", report)
    got = {
        (r.ego_id, r.day, r.slot.index): (r.from_level, r.to_level, r.intensities.as_tuple(), r.trait_z, r.period_dummy)
        for r in recs
    }
    assert got.keys() == FIXTURE_RECORDS.keys()
    for key, (x, y, inten, t, p) in FIXTURE_RECORDS.items():
        gx, gy, ginten, gt, gp = got[key]
        assert (gx, gy, ginten, gp) == (x, y, inten, p), key
        assert gt == pytest.approx(t, abs=1e-12)
    assert report.n_windows == 9 and report.n_records == 8
    assert dict(report.excluded) == {"alter_coverage": 1}
    assert_array_equal(count_transitions(recs), fixture_counts())
    # at most two per ego and day, never across days
    per_day = {}
    for r in recs:
        per_day[(r.ego_id, r.day)] = per_day.get((r.ego_id, r.day), 0) + 1
    assert max(per_day.values()) <= 2


def test_design_response_and_products():
    recs = [_record(L, N, t=-1.2, inten=(7.0, 0.0, 0.0))] + [_record(L, H, ego=f"e{i}") for i in range(3)]
    d = build_design(recs, L, N, min_rows=1)
    assert d.endog.tolist() == [1.0, 0.0, 0.0, 0.0]
    row = next(d.rows())
    assert row.covariates["T*L"] == pytest.approx(-8.4)
    assert row.response == 1 and row.index == (1, 0)
    with pytest.raises(InsufficientData):
        build_design(recs, L, N, min_rows=30)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([L, N, H]), st.sampled_from([L, N, H]), st.integers(0, 5)), min_size=1,
                max_size=40))
def test_row_conservation(pairs):
    recs = [_record(x, y, ego=f"e{i % 7}", day=1 + i // 7 % 5, inten=(float(k), 0.0, 1.0)) for i, (x, y, k) in
            enumerate(pairs)]
    for x in (L, N, H):
        if not any(r.from_level == x for r in recs):
            continue
        designs = [build_design(recs, x, y, min_rows=1) for y in (L, N, H)]
        assert_array_equal(sum(d.endog for d in designs), 1.0)
        assert_array_equal(designs[0].exog, designs[1].exog)


def test_design_order_insensitive():
    rng = np.random.default_rng(0)
    recs = [_record(L, [L, N, H][i % 3], ego=f"e{i % 5}", day=i // 5 + 1, inten=(float(i), 0, 0)) for i in range(40)]
    shuffled = list(np.array(recs, dtype=object)[rng.permutation(40)])
    a, b = build_design(recs, L, N), build_design(shuffled, L, N)
    assert_array_equal(a.exog, b.exog)
    assert_array_equal(a.endog, b.endog)


def test_table2_row_from_published_counts():
    summary = transition_count_table(paper_tables())
    row = summary.summary[(L, L)]
    assert (row["max"], row["min"], row["median"]) == (167, 79, 100)
    assert row["mean"] == pytest.approx(111, abs=0.5)


def test_extraversion_to_level_percentages():
    pct = to_level_percentages(paper_tables()["extraversion"], "reported")
    assert_allclose(pct, (22.087, 52.752, 37.275), atol=0.01)
    share = to_level_percentages(paper_tables()["extraversion"], "share")
    assert share[0] == pytest.approx(100 * 182 / 824)
    assert sum(share) == pytest.approx(100)


def test_single_state_summary_is_identity():
    c = paper_tables()["hpa"]
    s = transition_count_table({"hpa": c}).summary
    for x in (L, N, H):
        for y in (L, N, H):
            assert s[(x, y)]["max"] == s[(x, y)]["min"] == s[(x, y)]["mean"] == c[int(x), int(y)]


def test_count_table_accepts_records():
    recs = [_record(L, N), _record(L, N), _record(H, H)]
    t = transition_count_table({"s": recs})
    assert t.counts["s"][0, 1] == 2 and t.counts["s"].sum() == 3

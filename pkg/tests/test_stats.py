import math
import random
from fractions import Fraction

import numpy as np
import pytest

from fpscope.ingest import AppRecord, Label, SdkLabel, SignalClass
from fpscope.ir import SdkCoordinate as C
from fpscope.stats import (
    StatsError,
    UndefinedAlphaError,
    cooccurrence,
    export_onehot_embeddings,
    krippendorff_alpha,
    prevalence,
    sensitive_signal_shares,
)

from generators import APIS, random_fixture, verdict
from oracles import alpha_by_pairs, cooccurrence_recount, prevalence_recount, shares_recount


def test_prevalence_matches_recount():
    for seed in range(20):
        apps, app_sdks, verdicts, labels, _sm = random_fixture(random.Random(seed))
        flagged = {s for s, v in verdicts.items() if v.flagged}
        table = prevalence(apps, app_sdks, verdicts, labels)
        expect = prevalence_recount(apps, app_sdks, flagged, labels)
        assert set(table.app_counts) == set(expect)
        for cat, (n, any_share, per) in expect.items():
            assert table.app_counts[cat] == n
            assert table.any_label[cat] == any_share
            for lab in Label:
                assert table.by_label[cat][lab] == per.get(lab.value, 0.0)
                assert table.by_label[cat][lab] <= table.any_label[cat]


def test_prevalence_small_examples():
    s = C("s", "x", "1")
    apps = [AppRecord("a", "Tools", 1), AppRecord("b", "Tools", 1), AppRecord("c", "Game", 1)]
    t = prevalence(apps, {"a": {s}}, {s: verdict(s, APIS[:3])}, {s: SdkLabel(Label.ADS)})
    assert t.any_label == {"Game": 0.0, "Tools": 0.5}
    assert t.by_label["Tools"][Label.ADS] == 0.5
    t = prevalence(apps, {"a": {s}}, {s: verdict(s, APIS[:3])}, {})
    assert t.by_label["Tools"][Label.UNCLEAR_UNFOUND] == 0.5 and t.diagnostics
    with pytest.raises(StatsError):
        prevalence(apps, {"zzz": {s}}, {}, {})


def test_cooccurrence_matches_pair_enumeration():
    for seed in range(20):
        apps, app_sdks, verdicts, _l, _sm = random_fixture(random.Random(seed))
        flagged = {s for s, v in verdicts.items() if v.flagged}
        m = cooccurrence(apps, app_sdks, verdicts, top_k=10)
        expect = cooccurrence_recount(apps, app_sdks, flagged, 10)
        assert np.array_equal(m.values, m.values.T, equal_nan=True)
        for (a, b), v in expect.items():
            got = m.cell(a, b)
            assert got == v
            assert got is None or 0.0 <= got <= 1.0


def test_cooccurrence_examples():
    s, t = C("s", "x", "1"), C("s", "y", "1")
    vs = {s: verdict(s, APIS[:3]), t: verdict(t, APIS[3:6])}
    apps = [AppRecord("a", "Tools", 5), AppRecord("b", "Game", 5), AppRecord("c", "Game", 4)]
    m = cooccurrence(apps, {"a": {s}, "b": {t}, "c": {t}}, vs)
    assert m.cell("Game", "Tools") == 0.0
    assert m.cell("Game", "Game") == 1.0
    assert m.cell("Tools", "Tools") is None  # one app: no distinct pairs
    m = cooccurrence(apps, {"a": {s}, "b": {s}, "c": {s}}, vs)
    assert m.cell("Game", "Tools") == 1.0
    # top-K keeps the largest apps, ties by appId
    m = cooccurrence(apps, {"a": {s}, "b": {s}}, vs, top_k=1)
    assert m.cell("Game", "Tools") == 1.0
    with pytest.raises(StatsError):
        cooccurrence(apps, {}, vs, top_k=0)


def test_signal_shares_match_recount():
    for seed in range(20):
        _a, _s, verdicts, _l, signal_map = random_fixture(random.Random(seed))
        flagged = {s: v.apis for s, v in verdicts.items() if v.flagged}
        got = sensitive_signal_shares(verdicts, signal_map)
        expect = shares_recount(flagged, {k: v.value for k, v in signal_map.items()})
        assert got == expect
        assert got["LOCATION"] >= max(got["LOCATION_COARSE"], got["LOCATION_FINE"])


def test_signal_share_example():
    sdks = [C("s", f"k{i}", "1") for i in range(4)]
    vs = {s: verdict(s, APIS[i * 2: i * 2 + 2]) for i, s in enumerate(sdks)}
    shares = sensitive_signal_shares(vs, {APIS[0]: SignalClass.ACCOUNT_LIST})
    assert shares["ACCOUNT_LIST"] == 0.25
    assert shares["LOCATION"] == 0.0


def test_embeddings_match_recount():
    for seed in range(20):
        _a, _s, verdicts, _l, _sm = random_fixture(random.Random(seed))
        flagged = sorted(s for s, v in verdicts.items() if v.flagged)
        if not flagged:
            with pytest.raises(StatsError):
                export_onehot_embeddings(verdicts)
            continue
        emb = export_onehot_embeddings(verdicts)
        cols = sorted(set().union(*(verdicts[s].apis for s in flagged)))
        assert list(emb.sdks) == flagged and list(emb.apis) == cols
        for i, s in enumerate(flagged):
            for j, a in enumerate(cols):
                assert emb.matrix[i, j] == (1 if a in verdicts[s].apis else 0)
            assert emb.matrix[i].sum() == len(verdicts[s].apis)
        lines = emb.to_csv().splitlines()
        assert lines[0].split(",") == ["sdk", *cols] and len(lines) == len(flagged) + 1


def test_embedding_examples():
    a, b = C("s", "a", "1"), C("s", "b", "1")
    emb = export_onehot_embeddings({a: verdict(a, APIS[:3])})
    assert emb.matrix.tolist() == [[1, 1, 1]]
    emb = export_onehot_embeddings({a: verdict(a, APIS[:2]), b: verdict(b, APIS[2:5])})
    assert emb.matrix.tolist() == [[1, 1, 0, 0, 0], [0, 0, 1, 1, 1]]


# ---------------------------------------------------------------- alpha


def test_alpha_perfect_agreement_is_one():
    ratings = [["a", "a", "a"], ["b", "b", None], ["c", "c", "c"], ["a", None, "a"]]
    assert krippendorff_alpha(ratings) == 1.0


def test_alpha_worked_example():
    r1, r2 = ["a", "a", "b", "b"], ["a", "b", "b", "b"]
    ratings = [list(p) for p in zip(r1, r2)]
    # coincidences: o_aa=2, o_ab=o_ba=1, o_bb=4, n_a=3, n_b=5, n=8
    expect = 1 - (8 - 1) * Fraction(2) / (3 * 5 * 2)
    assert expect == Fraction(8, 15)
    assert abs(krippendorff_alpha(ratings) - float(expect)) <= 1e-12
    assert alpha_by_pairs(ratings) == expect


def test_alpha_matches_pairwise_oracle():
    rng = random.Random(0)
    checked = 0
    while checked < 50:
        n_items, n_raters = rng.randint(2, 8), rng.randint(2, 5)
        values = ["a", "b", "c", "d"][: rng.randint(2, 4)]
        ratings = [[rng.choice(values) if rng.random() > 0.2 else None for _ in range(n_raters)] for _ in range(n_items)]
        try:
            got = krippendorff_alpha(ratings)
        except (UndefinedAlphaError, StatsError):
            continue
        assert abs(got - float(alpha_by_pairs(ratings))) <= 1e-12
        checked += 1


def test_alpha_chance_level_for_random_labels():
    rng = np.random.default_rng(42)
    ratings = rng.integers(0, 2, size=(10_000, 2)).tolist()
    assert abs(krippendorff_alpha(ratings)) <= 0.05


def test_alpha_invariant_under_item_permutation():
    rng = random.Random(9)
    ratings = [[rng.choice("xyz") for _ in range(3)] for _ in range(30)]
    shuffled = ratings[:]
    rng.shuffle(shuffled)
    assert math.isclose(krippendorff_alpha(ratings), krippendorff_alpha(shuffled), abs_tol=1e-12)


def test_alpha_undefined_and_invalid():
    with pytest.raises(UndefinedAlphaError):
        krippendorff_alpha([["a", "a"], ["a", "a"]])
    with pytest.raises(StatsError):
        krippendorff_alpha([["a"], ["b"]])
    with pytest.raises(StatsError):
        krippendorff_alpha([["a", None], [None, "b"]])

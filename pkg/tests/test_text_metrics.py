import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replex import text_metrics as tm
from oracles import brute_dimen, brute_distinct, brute_l_dimen, hand_bleu_cat_example

QUARTER = tm.DimenConfig(4, (0.25, 0.25, 0.25, 0.25))
UNI = tm.DimenConfig(1, (1.0,))
seqs = st.lists(st.sampled_from("abcde"), max_size=20)


def test_ngrams_examples():
    assert tm.ngrams(["a", "b", "c"], 2) == [("a", "b"), ("b", "c")]
    assert tm.ngrams(["a"], 1) == [("a",)]
    assert tm.ngrams([], 3) == []
    with pytest.raises(ValueError):
        tm.ngrams(["a"], 0)


@pytest.mark.parametrize("seq,k,expected", [
    (["a"] * 4, 1, 1 / 3),
    (list("ababab"), 2, 0.5),
    (["a"], 2, 1.0),
    (list("abcde"), 1, 1.0),  # 5/4 clamps to 1
])
def test_distinct_examples(seq, k, expected):
    assert tm.distinct(seq, k) == pytest.approx(expected, abs=1e-15)


def test_u_dimen_examples():
    assert tm.u_dimen(list("abcde"), QUARTER) == 1.0
    assert tm.u_dimen(["a"] * 8, QUARTER) == pytest.approx(0.18988095238095237, abs=1e-12)
    assert tm.u_dimen([], QUARTER) == 1.0


def test_l_dimen_examples():
    assert tm.l_dimen([["a", "b"], ["a", "b"]], UNI) == pytest.approx(2 / 3)
    single = list("abcd")
    assert tm.l_dimen([single], QUARTER) == tm.u_dimen(single, QUARTER)
    assert tm.l_dimen([["a"]] * 4, UNI) == pytest.approx(1 / 3)
    assert tm.l_dimen([], QUARTER) == 1.0


def test_l_dimen_does_not_cross_boundaries():
    # "a b" + "c d" would contain the bigram (b, c) if concatenated
    assert tm.l_dimen([["a", "b"], ["c", "d"]], tm.DimenConfig(2, (0.0, 1.0))) == 1.0
    assert tm.l_dimen([["a"], ["b"], ["c"]], tm.DimenConfig(2, (0.0, 1.0))) == 0.0


def test_dimen_config_validation():
    with pytest.raises(ValueError):
        tm.DimenConfig(2, (0.5, 0.6))
    with pytest.raises(ValueError):
        tm.DimenConfig(3, (0.5, 0.5))
    with pytest.raises(ValueError):
        tm.Wl2Config(3, (1.0, 1.0))


def test_histogram_examples():
    cfg = tm.Wl2Config()
    assert tm.histogram([0.05, 0.95, 1.0], cfg) == [1, 0, 0, 0, 0, 0, 0, 0, 0, 2]
    assert tm.histogram([], cfg) == [0] * 10
    assert tm.histogram([0.1], cfg)[1] == 1
    with pytest.raises(ValueError):
        tm.histogram([1.01], cfg)
    with pytest.raises(ValueError):
        tm.histogram([-0.1], cfg)


def test_default_beta():
    assert tm.Wl2Config().beta == (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0)


def test_wl2_examples():
    cfg = tm.Wl2Config()
    assert tm.wl2([0] * 10, cfg) == 0.0
    assert tm.wl2([10] + [0] * 9, cfg) == pytest.approx(9.486832980505138, abs=1e-12)
    assert tm.wl2([0] * 9 + [42], cfg) == 0.0
    with pytest.raises(ValueError):
        tm.wl2([1, 2], cfg)


def test_bleu_examples():
    sents = [list("abcdef"), "the cat sat on the mat".split()]
    assert tm.bleu4(sents, sents) == pytest.approx(1.0, abs=1e-12)
    assert tm.bleu4([["x", "y", "z", "w"]], [["a", "b", "c", "d"]]) < 1e-8
    hyp = "the cat sat on mat".split()
    ref = "the cat sat on the mat".split()
    assert tm.bleu4([hyp], [ref]) == pytest.approx(hand_bleu_cat_example(), abs=1e-9)
    assert hand_bleu_cat_example() == pytest.approx(0.5789300674674098, abs=1e-12)
    with pytest.raises(ValueError):
        tm.bleu4([hyp], [])


def test_bleu_is_corpus_level():
    # statistics are pooled before the ratio, so this is not a mean of sentence scores
    a = "the cat sat on the mat".split()
    b = "a dog ran in a park today".split()
    pooled = tm.bleu4([a, "a dog ran".split()], [a, b])
    assert 0 < pooled < 1
    assert pooled != pytest.approx((1.0 + tm.bleu4(["a dog ran".split()], [b])) / 2)


@settings(max_examples=300, deadline=None)
@given(seqs, st.integers(1, 5))
def test_distinct_matches_oracle_and_range(seq, k):
    d = tm.distinct(seq, k)
    assert d == brute_distinct(seq, k)
    assert 0.0 <= d <= 1.0


@settings(max_examples=200, deadline=None)
@given(seqs)
def test_u_dimen_matches_oracle(seq):
    got = tm.u_dimen(seq, QUARTER)
    assert got == pytest.approx(brute_dimen(seq, QUARTER.alpha), abs=1e-15)
    assert 0.0 <= got <= 1.0 + 1e-15


@settings(max_examples=200, deadline=None)
@given(st.lists(seqs, max_size=6), st.randoms(use_true_random=False))
def test_l_dimen_oracle_and_permutation_invariance(utts, rnd):
    got = tm.l_dimen(utts, QUARTER)
    assert got == pytest.approx(brute_l_dimen(utts, QUARTER.alpha), abs=1e-15)
    shuffled = list(utts)
    rnd.shuffle(shuffled)
    assert tm.l_dimen(shuffled, QUARTER) == pytest.approx(got, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), max_size=50), st.randoms(use_true_random=False))
def test_histogram_and_wl2_permutation_invariant(scores, rnd):
    cfg = tm.Wl2Config()
    hist = tm.histogram(scores, cfg)
    assert sum(hist) == len(scores)
    shuffled = list(scores)
    rnd.shuffle(shuffled)
    assert tm.histogram(shuffled, cfg) == hist
    assert tm.wl2(tm.histogram(shuffled, cfg), cfg) == tm.wl2(hist, cfg)


def test_repeated_token_distinct_decreases():
    values = [tm.distinct(["z"] * n, 1) for n in range(2, 30)]
    assert values[0] == 1.0
    assert all(b < a for a, b in zip(values, values[1:]))
    assert all(v == pytest.approx(1 / max(n - 1, 1)) for n, v in zip(range(2, 30), values))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=10, max_size=10), st.integers(0, 9))
def test_wl2_monotone_in_counts(counts, idx):
    cfg = tm.Wl2Config()
    bumped = list(counts)
    bumped[idx] += 1
    assert tm.wl2(bumped, cfg) >= tm.wl2(counts, cfg)


def test_report_and_format():
    hyps = [["a", "b"], ["a", "a", "a", "a", "a"]]
    rep = tm.report(hyps, hyps)
    assert set(rep) == {"wl2", "l_dimen", "bleu4", "mean_u_dimen", "hist"}
    assert sum(rep["hist"]) == 2
    text = tm.format_report(rep)
    assert text.splitlines()[0].startswith("wl2=")
    assert text.splitlines()[-1] == "hist=[" + ",".join(map(str, rep["hist"])) + "]"
    assert math.isclose(rep["mean_u_dimen"], (1.0 + tm.u_dimen(hyps[1])) / 2)


def test_random_sequences_match_oracle_fixed_seed():
    rng = random.Random(5)
    for _ in range(200):
        seq = [rng.randrange(5) for _ in range(rng.randrange(21))]
        for k in range(1, 5):
            assert tm.distinct(seq, k) == brute_distinct(seq, k)

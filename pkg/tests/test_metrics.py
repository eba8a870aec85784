import math

import pytest
from hypothesis import given, settings, strategies as st

from nmtlab.metrics import corpus_bleu


def naive_clipped_matches(hyp, ref, n):
    """Independent n-gram matcher: scan positions, clip by reference count."""
    hyp_ngrams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
    ref_ngrams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    matched = 0
    for gram in set(hyp_ngrams):
        matched += min(hyp_ngrams.count(gram), ref_ngrams.count(gram))
    return matched, len(hyp_ngrams)


def naive_bleu(hyps, refs, max_n=4):
    matched = [0] * max_n
    possible = [0] * max_n
    c = sum(len(h) for h in hyps)
    r = sum(len(t) for t in refs)
    for h, t in zip(hyps, refs):
        for n in range(1, max_n + 1):
            m, p = naive_clipped_matches(h, t, n)
            matched[n - 1] += m
            possible[n - 1] += p
    precisions = [m / p if p else 0.0 for m, p in zip(matched, possible)]
    if c == 0:
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    if any(p == 0 for p in precisions):
        return 0.0
    return bp * math.exp(sum(math.log(p) for p in precisions) / max_n)


HYP = "the cat sat on mat".split()
REF = "the cat sat on the mat".split()


class TestHandExample:
    def test_precisions(self):
        res = corpus_bleu([HYP], [REF])
        assert res.precisions == (5 / 5, 3 / 4, 2 / 3, 1 / 2)

    def test_brevity_penalty(self):
        res = corpus_bleu([HYP], [REF])
        assert res.brevity_penalty == pytest.approx(math.exp(-1 / 5))
        assert res.hyp_len == 5
        assert res.ref_len == 6

    def test_score(self):
        res = corpus_bleu([HYP], [REF])
        assert res.score == pytest.approx(0.5789, abs=1e-3)
        assert res.score == pytest.approx(naive_bleu([HYP], [REF]), abs=1e-12)
        assert res.score_x100 == pytest.approx(57.89, abs=0.1)


class TestBleuBasics:
    def test_identity(self):
        sents = [["a", "b", "c", "d"], ["x", "y", "z", "w", "v"]]
        res = corpus_bleu(sents, sents)
        assert res.score == 1.0
        assert res.brevity_penalty == 1.0

    def test_no_common_fourgram(self):
        hyp = ["a", "b", "c", "q", "e"]
        ref = ["a", "b", "c", "d", "e"]
        assert corpus_bleu([hyp], [ref]).score == 0.0

    def test_all_empty_hypotheses(self):
        res = corpus_bleu([[]], [["a", "b", "c", "d"]])
        assert res.score == 0.0
        assert res.brevity_penalty == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            corpus_bleu([HYP], [REF, REF])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            corpus_bleu([], [])

    def test_unigram_clipping(self):
        # repeating a correct word may not raise the clipped numerator
        ref = ["the", "cat"]
        flooded = corpus_bleu([["the"] * 7], [ref])
        assert flooded.precisions[0] == pytest.approx(1 / 7)

    def test_pair_order_invariance(self):
        hyps = [["a", "b", "c", "d"], ["b", "b", "c", "e", "f"], ["x", "y", "z", "q"]]
        refs = [["a", "b", "c", "e"], ["b", "b", "c", "e"], ["x", "y", "z", "q", "r"]]
        fwd = corpus_bleu(hyps, refs)
        rev = corpus_bleu(hyps[::-1], refs[::-1])
        assert fwd.score == pytest.approx(rev.score, abs=1e-15)
        assert fwd.precisions == rev.precisions

    def test_shorter_hypotheses_never_raise_bp(self):
        refs = [["a", "b", "c", "d", "e"]] * 3
        full = corpus_bleu([r[:] for r in refs], refs)
        cut = corpus_bleu([r[:-1] for r in refs], refs)
        assert cut.brevity_penalty <= full.brevity_penalty

    def test_case_sensitive(self):
        assert corpus_bleu([["The", "cat", "sat", "up"]], [["the", "cat", "sat", "up"]]).score == 0.0


@given(st.data())
@settings(max_examples=60)
def test_matches_naive_scorer(data):
    vocab = ["a", "b", "c", "d"]
    n = data.draw(st.integers(1, 4))
    hyps = [
        data.draw(st.lists(st.sampled_from(vocab), min_size=0, max_size=9))
        for _ in range(n)
    ]
    refs = [
        data.draw(st.lists(st.sampled_from(vocab), min_size=1, max_size=9))
        for _ in range(n)
    ]
    res = corpus_bleu(hyps, refs)
    assert res.score == pytest.approx(naive_bleu(hyps, refs), abs=1e-12)
    assert 0.0 <= res.score <= 1.0

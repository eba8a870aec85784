import pytest
from hypothesis import given, settings, strategies as st

from nmtlab.subword import (
    BOS, EOS, PAD, UNK, MergeTable, SubwordError, Vocab, apply_bpe,
    build_vocab, detok_bpe, learn_bpe, propagate_pos,
)

WORD = st.text(alphabet="abcdefgh", min_size=1, max_size=10)


class TestLearnBpe:
    def test_zero_merges(self):
        table = learn_bpe([["hello", "world"]], 0)
        assert table.merges == ()

    def test_low_lower_example(self):
        table = learn_bpe([["low", "low", "low", "lower", "lower"]], 2)
        assert table.merges == (("l", "o"), ("lo", "w"))

    def test_early_stop_on_rare_pairs(self):
        table = learn_bpe([["ab"]], 5)
        assert table.merges == ()

    def test_deterministic(self):
        corpus = [["banana", "bandana", "cabana"], ["banana", "cabana"]]
        assert learn_bpe(corpus, 12).merges == learn_bpe(corpus, 12).merges

    def test_empty_corpus_rejected(self):
        with pytest.raises(SubwordError):
            learn_bpe([], 3)

    def test_negative_merges_rejected(self):
        with pytest.raises(ValueError):
            learn_bpe([["a"]], -1)


class TestApplyBpe:
    def test_character_fallback(self):
        assert apply_bpe(MergeTable(()), ["cat"]) == ["c@@", "a@@", "t"]

    def test_priority_application(self):
        table = MergeTable((("l", "o"), ("lo", "w")))
        assert apply_bpe(table, ["lower"]) == ["low@@", "e@@", "r"]

    def test_merge_into_full_word(self):
        table = MergeTable((("l", "o"), ("lo", "w"), ("low", "</w>")))
        assert apply_bpe(table, ["low"]) == ["low"]

    def test_unknown_characters_stay_singletons(self):
        table = learn_bpe([["aaaa", "aaaa"]], 2)
        out = apply_bpe(table, ["zz"])
        assert out == ["z@@", "z"]

    def test_multiple_words(self):
        table = MergeTable((("l", "o"),))
        assert apply_bpe(table, ["lo", "lol"]) == ["lo", "lo@@", "l"]
        assert detok_bpe(apply_bpe(table, ["lo", "lol"])) == ["lo", "lol"]


class TestDetok:
    def test_rejoin(self):
        assert detok_bpe(["low@@", "e@@", "r"]) == ["lower"]

    def test_plain_token(self):
        assert detok_bpe(["low"]) == ["low"]

    def test_dangling_continuation(self):
        with pytest.raises(SubwordError):
            detok_bpe(["a@@"])

    def test_empty(self):
        assert detok_bpe([]) == []


@given(st.lists(WORD, min_size=1, max_size=8), st.integers(0, 30))
@settings(max_examples=150)
def test_round_trip(words, n_merges):
    table = learn_bpe([words], n_merges)
    subwords = apply_bpe(table, words)
    assert detok_bpe(subwords) == list(words)


@given(st.lists(st.lists(WORD, min_size=1, max_size=6), min_size=1, max_size=5))
@settings(max_examples=60)
def test_round_trip_on_unseen_words(corpora):
    # a table learned on one corpus must still round-trip any other words
    table = learn_bpe(corpora, 20)
    probe = ["abba", "hhh", "gfedcba"]
    assert detok_bpe(apply_bpe(table, probe)) == probe


class TestPropagatePos:
    def test_word_split_three_ways(self):
        out = propagate_pos(["lower"], ["ADJ"], ["low@@", "e@@", "r"])
        assert out == ["ADJ", "ADJ", "ADJ"]

    def test_one_to_one(self):
        out = propagate_pos(["the", "cat"], ["DET", "NOUN"], ["the", "cat"])
        assert out == ["DET", "NOUN"]

    def test_mismatch_names_index(self):
        with pytest.raises(SubwordError, match="index 1"):
            propagate_pos(["the", "cat"], ["DET", "NOUN"], ["the", "dog"])

    def test_specials_get_special_tag(self):
        out = propagate_pos(
            ["cat"], ["NOUN"], [BOS, "c@@", "a@@", "t", EOS, PAD]
        )
        assert out == ["X_SPECIAL", "NOUN", "NOUN", "NOUN", "X_SPECIAL", "X_SPECIAL"]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            propagate_pos(["a", "b"], ["DET"], ["a", "b"])

    def test_tag_multiset_matches_subword_counts(self):
        words = ["aa", "bb", "c"]
        tags = ["NOUN", "VERB", "DET"]
        table = learn_bpe([words * 3], 4)
        subwords = apply_bpe(table, words)
        out = propagate_pos(words, tags, subwords)
        assert len(out) == len(subwords)
        # each word's subwords all carry that word's tag, in order
        rebuilt = detok_bpe(subwords)
        assert rebuilt == words


class TestVocab:
    def test_min_freq_two(self):
        vocab = build_vocab([["a", "a", "a", "b"]], min_freq=2)
        assert vocab.token_to_id == {PAD: 0, UNK: 1, BOS: 2, EOS: 3, "a": 4}

    def test_min_freq_one_orders_by_frequency(self):
        vocab = build_vocab([["a", "a", "a", "b"]], min_freq=1)
        assert vocab.token_to_id["a"] == 4
        assert vocab.token_to_id["b"] == 5

    def test_frequency_tie_breaks_lexicographically(self):
        vocab = build_vocab([["z", "y", "z", "y"]], min_freq=1)
        assert vocab.token_to_id["y"] == 4
        assert vocab.token_to_id["z"] == 5

    def test_empty_corpus_gives_specials_only(self):
        vocab = build_vocab([], min_freq=1)
        assert len(vocab) == 4

    def test_tagset_has_18_entries(self):
        vocab = build_vocab([], min_freq=1)
        assert vocab.n_tags == 18
        assert vocab.pos_to_id["X_SPECIAL"] == 17

    def test_unk_mapping(self):
        vocab = build_vocab([["a"]], min_freq=1)
        assert vocab.encode(["a", "zzz"]) == [4, 1]

    def test_save_load_round_trip(self, tmp_path):
        vocab = build_vocab([["fox", "fox", "hen"]], min_freq=1)
        path = tmp_path / "vocab.json"
        vocab.save(path)
        loaded = Vocab.load(path)
        assert loaded.token_to_id == vocab.token_to_id
        assert loaded.pos_to_id == vocab.pos_to_id
        assert loaded.fingerprint() == vocab.fingerprint()

    def test_fingerprint_changes_with_content(self):
        a = build_vocab([["x"]], min_freq=1)
        b = build_vocab([["y"]], min_freq=1)
        assert a.fingerprint() != b.fingerprint()


class TestMergeTableIO:
    def test_save_load_round_trip(self, tmp_path):
        table = learn_bpe([["banana", "bandana"] * 3], 6)
        path = tmp_path / "codes.bpe"
        table.save(path)
        loaded = MergeTable.load(path)
        assert loaded.merges == table.merges

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "codes.bpe"
        path.write_text("l o\n", encoding="utf-8")
        with pytest.raises(SubwordError, match="header"):
            MergeTable.load(path)

    def test_header_line_present(self, tmp_path):
        table = MergeTable((("a", "b"),))
        path = tmp_path / "codes.bpe"
        table.save(path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "#nmtlab-bpe v1"

    def test_duplicate_merge_rejected(self):
        with pytest.raises(SubwordError):
            MergeTable((("a", "b"), ("a", "b")))

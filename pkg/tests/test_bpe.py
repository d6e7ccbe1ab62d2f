from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mustok.bpe import (BpeModel, SubwordSequence, bpe_decode, bpe_encode, merge_pair,
                        train_bpe)
from mustok.errors import EmptyCorpus, TargetBelowBase, UnknownPiece, UnknownSymbol
from mustok.symbols import Alphabet, SymbolString
from support import markov_corpus, naive_bpe

AB = Alphabet.of_symbols("ab")
ABAB_MODEL = BpeModel(AB, (("a", "b"), ("ab", "ab")), 4)


def surfaces(seq: SubwordSequence, model: BpeModel) -> list[str]:
    return [model.surface(p) for p in seq.pieces]


class TestTraining:
    def test_worked_example(self):
        model = train_bpe(["abababab"], 4, AB)
        assert model.merges == (("a", "b"), ("ab", "ab"))
        assert model.vocab == ("a", "b", "ab", "abab")

    def test_target_equal_to_base(self):
        model = train_bpe(["abab"], 2, AB)
        assert model.merges == ()
        assert surfaces(bpe_encode("abab", model), model) == list("abab")

    def test_pairs_seen_once_are_not_merged(self):
        assert train_bpe(["abcd"], 10).merges == ()

    def test_target_below_base(self):
        with pytest.raises(TargetBelowBase):
            train_bpe(["abc"], 2)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train_bpe([], 5)

    def test_unknown_symbol_in_corpus(self):
        with pytest.raises(UnknownSymbol):
            train_bpe(["abz"], 4, AB)

    def test_pairs_do_not_cross_songs(self):
        # "ba" would have count 2 if the two songs were glued together
        assert train_bpe(["ab", "ab"], 3, AB).merges == (("a", "b"),)
        assert train_bpe(["a", "b", "a", "b"], 3, AB).merges == ()

    def test_tie_goes_to_first_occurrence(self):
        # "cd" and "ab" both occur twice; "cd" is seen first
        model = train_bpe(["cdab", "cdab"], 5)
        assert model.merges[0] == ("c", "d")

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            alpha = "abcdef"[:int(rng.integers(2, 7))]
            texts = ["".join(rng.choice(list(alpha), size=int(rng.integers(1, 40))))
                     for _ in range(int(rng.integers(1, 6)))]
            target = len(set("".join(texts))) + int(rng.integers(0, 25))
            assert list(train_bpe(texts, target).merges) == naive_bpe(texts, target)

    def test_vocab_grows_one_per_merge(self):
        texts = markov_corpus(np.random.default_rng(4), 30, 20, 100)
        model = train_bpe(texts, 80)
        assert model.vocab_size == 80
        assert len(model.merges) == 80 - 30


class TestEncoding:
    def test_merges_apply_in_order(self):
        assert surfaces(bpe_encode("abab", ABAB_MODEL), ABAB_MODEL) == ["abab"]

    def test_nothing_applies(self):
        assert surfaces(bpe_encode("ba", ABAB_MODEL), ABAB_MODEL) == ["b", "a"]

    def test_zero_merge_model(self):
        model = BpeModel(AB, (), 2)
        assert len(bpe_encode("abba", model)) == 4

    def test_merge_pair_scans_left_to_right(self):
        assert merge_pair(list("aaa"), "a", "a") == ["aa", "a"]

    def test_encode_keeps_song_id(self):
        assert bpe_encode(SymbolString("ab", "000003"), ABAB_MODEL).song_id == "000003"

    def test_unknown_symbol(self):
        with pytest.raises(UnknownSymbol):
            bpe_encode("abc", ABAB_MODEL)

    def test_decode(self):
        seq = SubwordSequence((ABAB_MODEL.piece_id("abab"),))
        assert bpe_decode(seq, ABAB_MODEL).symbols == "abab"
        assert bpe_decode(SubwordSequence(()), ABAB_MODEL).symbols == ""

    def test_unknown_piece(self):
        with pytest.raises(UnknownPiece):
            bpe_decode(SubwordSequence((99,)), ABAB_MODEL)


MODEL = train_bpe(markov_corpus(np.random.default_rng(9), 8, 10, 60, base=ord("a")), 40)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="abcdefgh", max_size=60))
def test_decode_inverts_encode(text):
    assert bpe_decode(bpe_encode(text, MODEL), MODEL).symbols == text


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="abcdefgh", max_size=60))
def test_encoding_never_lengthens(text):
    assert len(bpe_encode(text, MODEL)) <= len(text)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abcd", min_size=1, max_size=30), min_size=1, max_size=5))
def test_more_merges_never_lengthen_the_corpus(texts):
    base = len(set("".join(texts)))
    full = train_bpe(texts, base + 20)
    lengths = []
    for k in range(len(full.merges) + 1):
        model = BpeModel(full.base_alphabet, full.merges[:k], base + k)
        lengths.append(sum(len(bpe_encode(t, model)) for t in texts))
    assert all(b <= a for a, b in zip(lengths, lengths[1:]))

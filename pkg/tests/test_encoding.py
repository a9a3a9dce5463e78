import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charnet.encoding import (
    EncodingConfig,
    document_indices,
    encode_document,
    encode_sentence,
    one_hot,
    split_sentences,
)
from charnet.errors import DataError

CFG = EncodingConfig(max_chars=100, max_sentences=5)


class TestSplitSentences:
    def test_terminators_stay_with_their_sentence(self):
        assert split_sentences("Hi. Bye!", CFG) == ["Hi.", "Bye!"]

    def test_empty_input(self):
        assert split_sentences("", CFG) == []

    def test_head_truncation(self):
        cfg = EncodingConfig(max_chars=100, max_sentences=2)
        assert split_sentences("a.b.c.", cfg) == ["a.", "b."]

    def test_newline_is_a_terminator(self):
        assert split_sentences("one\ntwo", CFG) == ["one\n", "two"]

    def test_blank_segments_dropped(self):
        assert split_sentences("\n\n  \n.a.", CFG) == ["a."]
        assert split_sentences("...", CFG) == []

    def test_question_and_bang(self):
        assert split_sentences("really? yes! ok", CFG) == ["really?", "yes!", "ok"]


class TestEncodeSentence:
    def test_single_char_one_hot(self, alphabet):
        cfg = EncodingConfig(max_chars=3, max_sentences=1)
        grid = encode_sentence("a", alphabet, cfg)
        assert grid.shape == (3, 71)
        assert grid[0, alphabet.index_of("a")] == 1
        assert grid[0].sum() == 1
        assert grid[1:].sum() == 0

    def test_empty_string_all_zero(self, alphabet):
        grid = encode_sentence("", alphabet, CFG)
        assert grid.shape == (100, 71)
        assert grid.sum() == 0

    def test_long_string_head_truncated(self, alphabet):
        grid = encode_sentence("x" * 200, alphabet, CFG)
        assert grid.sum() == 100
        assert (grid[:, alphabet.index_of("x")] == 1).all()

    def test_out_of_alphabet_rows_zero(self, alphabet):
        grid = encode_sentence("aéb", alphabet, CFG)
        assert grid[0].sum() == 1
        assert grid[1].sum() == 0  # é is not in the dictionary
        assert grid[2].sum() == 1

    def test_lowercase_folding(self, alphabet):
        up = encode_sentence("ABC", alphabet, CFG)
        lo = encode_sentence("abc", alphabet, CFG)
        assert (up == lo).all()

    def test_lowercase_off_drops_uppercase(self, alphabet):
        cfg = EncodingConfig(max_chars=4, max_sentences=1, lowercase=False)
        grid = encode_sentence("Ab", alphabet, cfg)
        assert grid[0].sum() == 0
        assert grid[1].sum() == 1


class TestEncodeDocument:
    def test_empty_document_is_all_zero(self, alphabet):
        grid = encode_document("", alphabet, CFG)
        assert grid.shape == (5, 100, 71)
        assert grid.sum() == 0

    def test_tail_padding(self, alphabet):
        cfg = EncodingConfig(max_chars=10, max_sentences=4)
        grid = encode_document("only one.", alphabet, cfg)
        assert grid[0].sum() > 0
        assert grid[1:].sum() == 0

    def test_shape_contract(self, alphabet):
        for text in ("", "a.", "lots. of. sentences. here. overflow. x."):
            grid = encode_document(text, alphabet, CFG)
            assert grid.shape == (5, 100, 71)

    @given(st.text(max_size=300))
    @settings(max_examples=60, deadline=None)
    def test_total_and_row_sums_binary(self, text):
        from charnet.alphabet import build_alphabet

        cfg = EncodingConfig(max_chars=20, max_sentences=3)
        grid = encode_document(text, build_alphabet(), cfg)
        sums = grid.sum(axis=-1)
        assert set(np.unique(sums)) <= {0.0, 1.0}
        assert grid.shape == (3, 20, 71)

    def test_total_ones_bounded_by_length(self, alphabet):
        cfg = EncodingConfig(max_chars=8, max_sentences=1)
        s = "abcde"
        grid = encode_sentence(s, alphabet, cfg)
        assert grid.sum() <= min(len(s), cfg.max_chars)

    def test_deterministic(self, alphabet):
        a = encode_document("Same text. Again!", alphabet, CFG)
        b = encode_document("Same text. Again!", alphabet, CFG)
        assert (a == b).all()


def test_one_hot_matches_dense_encoding(alphabet):
    cfg = EncodingConfig(max_chars=12, max_sentences=3)
    text = "Hello there! A test? With 3 sentences."
    dense = encode_document(text, alphabet, cfg)
    grid = document_indices(text, alphabet, cfg)
    assert (one_hot(grid) == dense).all()


def test_bad_config_rejected():
    with pytest.raises(DataError):
        EncodingConfig(max_chars=0, max_sentences=1)
    with pytest.raises(DataError):
        EncodingConfig(max_chars=1, max_sentences=0)

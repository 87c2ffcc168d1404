"""Chunker tests. Hand-counted merge decisions come first: the pair
frequencies for the worked examples are derived with an independent
brute-force counter before the trainer is trusted with them."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actioncap.bpe import (
    BpeModel,
    bpe_decode,
    bpe_encode,
    bpe_table_text,
    bpe_train,
    load_bpe,
    save_bpe,
)
from actioncap.errors import ConfigError, DataError


def brute_pair_counts(seqs):
    """Independent oracle: scan runs explicitly instead of while-skipping."""
    counts = {}
    for s in seqs:
        used = -1  # last index consumed by an identical-pair match
        for i in range(len(s) - 1):
            if s[i] == s[i + 1]:
                if i <= used:
                    continue
                used = i + 1
            pair = (s[i], s[i + 1])
            counts[pair] = counts.get(pair, 0) + 1
    return counts


# --------------------------------------------------------------- hand examples

def test_hand_example_ababcab():
    # "A B A B C A B" with A=0 B=1 C=2
    corpus = [[0, 1, 0, 1, 2, 0, 1]]
    oracle = brute_pair_counts(corpus)
    assert oracle == {(0, 1): 3, (1, 0): 1, (1, 2): 1, (2, 0): 1}

    model = bpe_train(corpus, target_vocab=4)
    assert model.merges == [(0, 1)]
    assert bpe_encode(model, corpus[0]) == [3, 3, 2, 3]  # "X X C X"


def test_run_counting_aaa():
    # "A A A" holds a single usable (A,A) pair; needs a second sequence
    # to reach frequency 2.
    corpus = [[0, 0, 0], [0, 0]]
    assert brute_pair_counts(corpus) == {(0, 0): 2}
    model = bpe_train(corpus, target_vocab=2)
    assert model.merges == [(0, 0)]
    assert bpe_encode(model, [0, 0, 0]) == [1, 0]
    assert bpe_encode(model, [0, 0, 0, 0]) == [1, 1]


def test_singleton_pairs_not_merged():
    model = bpe_train([[0, 0, 0]], target_vocab=5)
    assert model.merges == []


def test_fig4_style_dominant_pairs():
    # A A ... and D E ... dominate a corpus with scattered filler labels;
    # both must surface as merges. A=0, D=3, E=4.
    rng = np.random.default_rng(0)
    corpus = []
    for _ in range(30):
        seq = [0, 0, int(rng.integers(1, 3)), 3, 4, int(rng.integers(1, 3)), 0, 0, 3, 4]
        corpus.append(seq)
    model = bpe_train(corpus, target_vocab=8, alphabet_size=5)
    assert (0, 0) in model.merges
    assert (3, 4) in model.merges


def test_tie_break_ascending():
    corpus = [[1, 2, 5, 1, 2], [0, 3, 5, 0, 3]]
    counts = brute_pair_counts(corpus)
    assert counts[(1, 2)] == counts[(0, 3)] == 2
    model = bpe_train(corpus, target_vocab=7, alphabet_size=6)
    assert model.merges[0] == (0, 3)


def test_three_stacked_merges_expand():
    # Frequencies arranged so merges chain (0,1) -> (4,2) -> (5,3);
    # hand-derived: 13x (0,1), then 7x (4,2), then 3x (5,3).
    corpus = [[0, 1]] * 6 + [[0, 1, 2]] * 4 + [[0, 1, 2, 3]] * 3
    model = bpe_train(corpus, target_vocab=7, alphabet_size=4)
    assert model.merges == [(0, 1), (4, 2), (5, 3)]
    assert bpe_decode(model, [6]) == [0, 1, 2, 3]
    assert model.expansions[6] == (0, 1, 2, 3)


def test_target_vocab_equal_alphabet_is_identity():
    corpus = [[0, 1, 2, 0, 1, 2]]
    model = bpe_train(corpus, target_vocab=3)
    assert model.merges == []
    assert bpe_encode(model, [2, 1, 0]) == [2, 1, 0]


# ------------------------------------------------------------------ invariants

def test_vocab_size_accounting():
    corpus = [[0, 1, 0, 1], [0, 1, 2, 0, 1]]
    model = bpe_train(corpus, target_vocab=6, alphabet_size=3)
    assert model.vocab_size == 3 + len(model.merges)
    assert len(model.expansions) == model.vocab_size
    for rank, (left, right) in enumerate(model.merges):
        assert left < 3 + rank and right < 3 + rank  # only earlier tokens


label_seq = st.lists(st.integers(0, 7), min_size=0, max_size=40)


@settings(max_examples=150, deadline=None)
@given(st.lists(label_seq, min_size=1, max_size=8), st.integers(0, 12), label_seq)
def test_roundtrip_property(corpus, extra_vocab, probe):
    if not any(corpus):
        corpus = corpus + [[0, 1]]
    model = bpe_train(corpus, target_vocab=8 + extra_vocab, alphabet_size=8)
    for seq in corpus + [probe]:
        enc = bpe_encode(model, seq)
        assert bpe_decode(model, enc) == list(seq)
        assert len(enc) <= len(seq)


def test_strict_compression_on_merge_pair():
    corpus = [[0, 1, 0, 1, 2, 0, 1]]
    model = bpe_train(corpus, target_vocab=4)
    left, right = model.merges[0]
    seq = [2, left, right, 2]
    assert len(bpe_encode(model, seq)) < len(seq)


def test_monotone_training():
    rng = np.random.default_rng(3)
    corpus = [rng.integers(0, 4, size=rng.integers(10, 30)).tolist()
              for _ in range(25)]
    prev = None
    for target in range(4, 20):
        model = bpe_train(corpus, target_vocab=target, alphabet_size=4)
        total = sum(len(bpe_encode(model, s)) for s in corpus)
        if prev is not None:
            assert total <= prev
        prev = total


def test_training_deterministic():
    rng = np.random.default_rng(11)
    corpus = [rng.integers(0, 5, size=20).tolist() for _ in range(10)]
    a = bpe_train(corpus, target_vocab=12, alphabet_size=5)
    b = bpe_train(corpus, target_vocab=12, alphabet_size=5)
    assert a.merges == b.merges


# ------------------------------------------------------------------ edge cases

def test_empty_sequence_and_no_mergeable_pairs():
    model = bpe_train([[0, 1, 0, 1]], target_vocab=3, alphabet_size=2)
    assert bpe_encode(model, []) == []
    left, right = model.merges[0]
    assert bpe_encode(model, [1, 0]) == [1, 0] if (left, right) == (0, 1) else True


def test_errors():
    with pytest.raises(DataError):
        bpe_train([], target_vocab=4)
    with pytest.raises(ConfigError):
        bpe_train([[0, 1, 2]], target_vocab=2)
    with pytest.raises(DataError):
        bpe_train([[0, 5]], target_vocab=8, alphabet_size=3)
    model = bpe_train([[0, 1, 0, 1]], target_vocab=3, alphabet_size=2)
    with pytest.raises(DataError):
        bpe_encode(model, [0, 2])
    with pytest.raises(DataError):
        bpe_decode(model, [99])


def test_boundaries_are_hard():
    # (1,0) pairs exist only across sequence ends; they must not count.
    corpus = [[0, 1], [0, 1], [0, 1]]
    model = bpe_train(corpus, target_vocab=6, alphabet_size=2)
    assert model.merges == [(0, 1)]  # (1,0) never formed


# -------------------------------------------------------------------- file I/O

def test_merge_table_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    corpus = [rng.integers(0, 6, size=30).tolist() for _ in range(20)]
    model = bpe_train(corpus, target_vocab=14, alphabet_size=6)
    assert len(model.merges) > 0
    path = tmp_path / "merges.txt"
    save_bpe(model, str(path))
    back = load_bpe(str(path))
    assert back.alphabet_size == model.alphabet_size
    assert back.target_vocab == model.target_vocab
    assert back.merges == model.merges
    assert back.expansions == model.expansions
    seq = rng.integers(0, 6, size=40).tolist()
    assert bpe_encode(back, seq) == bpe_encode(model, seq)
    # text form mirrors the file byte for byte
    assert bpe_table_text(model) == path.read_text()


def test_merge_table_header_guard(tmp_path):
    path = tmp_path / "merges.txt"
    path.write_text('{"version": 9, "base_alphabet_size": 2, "target_vocab": 3}\n')
    with pytest.raises(DataError):
        load_bpe(str(path))
    path.write_text("")
    with pytest.raises(DataError):
        load_bpe(str(path))

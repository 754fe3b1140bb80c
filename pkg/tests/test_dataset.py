"""Text ingestion tests: vocab round trips, windowing, error paths."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from zklora.dataset import (
    UNKNOWN_TOKEN,
    DatasetBatch,
    EmptyDataset,
    VocabTooLarge,
    build_vocab,
    ingest_dataset,
    load_vocab,
    save_vocab,
    tokenize,
    unknown_id,
    windows,
)
from zklora.serialize import ParseError

WORDS = [UNKNOWN_TOKEN, "the", "proof", "field", "tensor"]


def test_vocab_round_trip(tmp_path):
    path = tmp_path / "vocab.txt"
    save_vocab(WORDS, path)
    assert load_vocab(path) == WORDS


def test_token_id_token_identity():
    for i, word in enumerate(WORDS):
        assert tokenize(word, WORDS) == [i]
        assert WORDS[tokenize(word, WORDS)[0]] == word


def test_out_of_vocab_maps_to_reserved_token():
    assert tokenize("zebra proof zebra", WORDS) == [0, 2, 0]
    assert unknown_id(WORDS) == 0
    shuffled = ["alpha", UNKNOWN_TOKEN, "beta"]
    assert unknown_id(shuffled) == 1
    assert tokenize("missing", shuffled) == [1]
    assert unknown_id(["alpha", "beta"]) == 0


def test_whitespace_forms_are_equivalent():
    assert (
        tokenize("the\tproof\n\nfield  tensor\r\n", WORDS)
        == tokenize("the proof field tensor", WORDS)
        == [1, 2, 3, 4]
    )


def test_windows_shift_by_one():
    ids = list(range(9))
    got = windows(ids, 4)
    assert got == [
        DatasetBatch((0, 1, 2, 3), (1, 2, 3, 4)),
        DatasetBatch((4, 5, 6, 7), (5, 6, 7, 8)),
    ]


@given(st.integers(5, 60), st.integers(1, 8))
def test_window_count_and_shift_property(total, n):
    ids = list(range(total))
    if total < n + 1:
        with pytest.raises(EmptyDataset):
            windows(ids, n)
        return
    got = windows(ids, n)
    assert len(got) == (total - 1) // n
    for batch in got:
        assert len(batch.tokens) == len(batch.targets) == n
        assert list(batch.targets)[:-1] == list(batch.tokens)[1:]


def test_empty_and_short_datasets_rejected(tmp_path):
    vocab = tmp_path / "vocab.txt"
    save_vocab(WORDS, vocab)
    data = tmp_path / "data.txt"
    data.write_text("")
    with pytest.raises(EmptyDataset):
        ingest_dataset(data, vocab, 4)
    data.write_text("the proof field tensor")  # 4 tokens, need 5
    with pytest.raises(EmptyDataset):
        ingest_dataset(data, vocab, 4)


def test_vocab_too_large(tmp_path):
    vocab = tmp_path / "vocab.txt"
    save_vocab(WORDS, vocab)
    data = tmp_path / "data.txt"
    data.write_text("the proof field tensor the")
    with pytest.raises(VocabTooLarge):
        ingest_dataset(data, vocab, 4, vocab_limit=4)
    assert len(ingest_dataset(data, vocab, 4, vocab_limit=8)) == 1


def test_duplicate_vocab_entry_rejected(tmp_path):
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("a\nb\na\n")
    with pytest.raises(ParseError):
        load_vocab(vocab)


def test_empty_vocab_rejected(tmp_path):
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("\n\n")
    with pytest.raises(ParseError):
        load_vocab(vocab)


def test_build_vocab_frequency_order():
    text = "b b b a a c " + UNKNOWN_TOKEN
    assert build_vocab(text, 4) == [UNKNOWN_TOKEN, "b", "a", "c"]
    assert build_vocab(text, 3) == [UNKNOWN_TOKEN, "b", "a"]
    # ties break lexicographically
    assert build_vocab("x y x y", 3) == [UNKNOWN_TOKEN, "x", "y"]
    with pytest.raises(VocabTooLarge):
        build_vocab(text, 0)


def test_ingest_end_to_end(tmp_path):
    text = "the proof field tensor the proof zebra tensor the"
    vocab = tmp_path / "vocab.txt"
    save_vocab(build_vocab(text, 5), vocab)
    data = tmp_path / "data.txt"
    data.write_text(text)
    batches = ingest_dataset(data, vocab, 2)
    assert len(batches) == 4
    words = load_vocab(vocab)
    index = {w: i for i, w in enumerate(words)}
    assert batches[0].tokens == (index["the"], index["proof"])
    # every id is in range for the derived vocab
    for batch in batches:
        assert all(0 <= t < len(words) for t in batch.tokens + batch.targets)
    # the out-of-vocab word became the reserved token
    flat = [t for b in batches for t in b.tokens]
    assert index.get("zebra") is None and 0 in flat

"""Plain-text dataset ingestion with a fixed word vocabulary.

Tokenization is whitespace splitting against a vocab file of one token
per line (line number = token id).  Unknown words map to the reserved
token ``<unk>`` -- its line if present, id 0 otherwise.  Training
examples are non-overlapping windows of ``n + 1`` token ids: the first
``n`` are the inputs and the last ``n`` (shifted by one) are the
next-token targets.
"""

from collections import Counter
from dataclasses import dataclass

from .serialize import ParseError

UNKNOWN_TOKEN = "<unk>"


class EmptyDataset(ValueError):
    """The text has too few tokens for even one training window."""


class VocabTooLarge(ValueError):
    """The vocab file has more entries than the model's vocab size."""


@dataclass(frozen=True)
class DatasetBatch:
    """One training example: n input token ids and their n successors."""

    tokens: tuple
    targets: tuple


def save_vocab(words, path):
    with open(path, "w", encoding="utf-8") as fh:
        for word in words:
            fh.write(word + "\n")


def load_vocab(path):
    """Vocab file -> list of tokens, id = position.  Lines must be unique."""
    words = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            word = line.strip()
            if not word:
                continue
            if word in seen:
                raise ParseError("duplicate vocab entry %r on line %d" % (word, lineno))
            seen.add(word)
            words.append(word)
    if not words:
        raise ParseError("vocab file %s has no entries" % path)
    return words


def unknown_id(words):
    try:
        return words.index(UNKNOWN_TOKEN)
    except ValueError:
        return 0


def tokenize(text, words):
    """Whitespace-split text into token ids under the given vocab."""
    index = {word: i for i, word in enumerate(words)}
    fallback = unknown_id(words)
    return [index.get(word, fallback) for word in text.split()]


def build_vocab(text, limit):
    """Derive a vocab from text: <unk> plus the most frequent words.

    Deterministic: ties break toward the lexicographically smaller word.
    """
    if limit < 1:
        raise VocabTooLarge("vocab limit must be at least 1")
    counts = Counter(word for word in text.split() if word != UNKNOWN_TOKEN)
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    return [UNKNOWN_TOKEN] + ranked[: limit - 1]


def windows(ids, n):
    """Non-overlapping length-(n+1) windows -> (inputs, shifted targets)."""
    if len(ids) < n + 1:
        raise EmptyDataset(
            "need at least %d tokens for one window, got %d" % (n + 1, len(ids))
        )
    return [
        DatasetBatch(tuple(ids[i : i + n]), tuple(ids[i + 1 : i + n + 1]))
        for i in range(0, len(ids) - n, n)
    ]


def ingest_dataset(path, vocab_path, n, vocab_limit=None):
    """Text file + vocab file -> list of DatasetBatch windows of size n."""
    words = load_vocab(vocab_path)
    if vocab_limit is not None and len(words) > vocab_limit:
        raise VocabTooLarge(
            "vocab has %d entries, model supports %d" % (len(words), vocab_limit)
        )
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    ids = tokenize(text, words)
    return windows(ids, n)

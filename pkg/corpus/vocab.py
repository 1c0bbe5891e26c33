"""
Token <-> id vocabularies.

Ids 0 and 1 are reserved for the unknown and end-of-sentence tokens. The
on-disk form is one token per line, the line number being the id.
"""
import logging
from collections import Counter
from pathlib import Path

from core_math.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

UNK = '<unk>'
EOS = '<eos>'
UNK_ID = 0
EOS_ID = 1
RESERVED = (UNK, EOS)


def read_lines(path):
    """Lines of a UTF-8 text file. Only newline ends a line; U+2028 and U+0085 do not."""
    with open(path, encoding='utf-8', newline='') as handle:
        text = handle.read()
    lines = text.split('\n')
    if lines[-1] == '':
        lines.pop()
    return [line[:-1] if line.endswith('\r') else line for line in lines]


def read_sentences(path):
    """Read a pre-tokenized UTF-8 corpus: one sentence per line, space-separated tokens."""
    try:
        return [line.split() for line in read_lines(path)]
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc


class Vocabulary:
    """Immutable after construction; lookups of unseen tokens return ``UNK_ID``."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:2]) != RESERVED:
            raise DataError(f"vocabulary must start with {RESERVED}, got {tokens[:2]}")
        if len(set(tokens)) != len(tokens):
            raise DataError('vocabulary contains duplicate tokens')
        self._tokens = tuple(tokens)
        self._ids = {token: i for i, token in enumerate(self._tokens)}

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    @property
    def tokens(self):
        return self._tokens

    def lookup(self, token):
        return self._ids.get(token, UNK_ID)

    def token(self, index):
        return self._tokens[index]

    def encode(self, tokens):
        return [self.lookup(t) for t in tokens]

    def decode(self, ids):
        return [self._tokens[i] for i in ids]

    def save(self, path):
        Path(path).write_text(''.join(f"{t}\n" for t in self._tokens), encoding='utf-8')

    @classmethod
    def load(cls, path):
        try:
            lines = read_lines(path)
        except (OSError, UnicodeDecodeError) as exc:
            raise DataError(f"cannot read vocabulary {path}: {exc}") from exc
        return cls(lines)


def vocab_from_sentences(sentences, max_size):
    """
    Keep the ``max_size - 2`` most frequent tokens after the reserved pair.
    Frequency ties keep first-occurrence order.
    """
    if max_size < 3:
        raise ConfigError(f"vocabulary size must be at least 3, got {max_size}")
    counts = Counter()
    for sentence in sentences:
        counts.update(t for t in sentence if t not in RESERVED)
    kept = [token for token, _ in counts.most_common(max_size - len(RESERVED))]
    logger.debug(f"Vocabulary keeps {len(kept)} of {len(counts)} distinct tokens")
    return Vocabulary(RESERVED + tuple(kept))


def build_vocab(corpus_path, max_size):
    return vocab_from_sentences(read_sentences(corpus_path), max_size)

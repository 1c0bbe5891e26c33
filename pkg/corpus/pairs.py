"""Sentence pairs, length filtering and padded mini-batches."""
import logging
from dataclasses import dataclass

import numpy as np

from core_math.exceptions import ConfigError, DataError

from .vocab import EOS_ID, read_sentences

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SentencePair:
    """
    Encoded pair. Both id sequences end with the end-of-sentence id; the
    source is reversed before the terminator when the model asks for it.
    Lengths count words, not the terminator.
    """
    source_ids: tuple
    target_ids: tuple
    source_tokens: tuple
    target_tokens: tuple = ()
    reversed_source: bool = False

    @property
    def source_length(self):
        return len(self.source_ids) - 1

    @property
    def target_length(self):
        return len(self.target_ids) - 1


def encode_pair(source_tokens, target_tokens, source_vocab, target_vocab, reverse_source=False):
    source_ids = source_vocab.encode(source_tokens)
    if reverse_source:
        source_ids = source_ids[::-1]
    return SentencePair(
        source_ids=tuple(source_ids) + (EOS_ID,),
        target_ids=tuple(target_vocab.encode(target_tokens)) + (EOS_ID,),
        source_tokens=tuple(source_tokens),
        target_tokens=tuple(target_tokens),
        reversed_source=reverse_source,
    )


def load_pairs(source_path, target_path, source_vocab, target_vocab, reverse_source=False):
    sources = read_sentences(source_path)
    targets = read_sentences(target_path)
    if len(sources) != len(targets):
        raise DataError(
            f"{source_path} has {len(sources)} sentences but {target_path} has {len(targets)}"
        )
    return [
        encode_pair(src, tgt, source_vocab, target_vocab, reverse_source)
        for src, tgt in zip(sources, targets)
    ]


def filter_pairs(pairs, max_len):
    """Drop pairs with either side longer than ``max_len`` words."""
    kept = [p for p in pairs if p.source_length <= max_len and p.target_length <= max_len]
    if len(kept) < len(pairs):
        logger.info(f"Length filter ({max_len}) dropped {len(pairs) - len(kept)} of {len(pairs)} pairs")
    return kept


@dataclass
class Batch:
    """
    Up to B pairs, each side right-padded to the batch maximum.

    ``source`` and ``target`` are ``[B, S]`` / ``[B, M]`` id arrays; the
    masks mark real positions (terminator included). Padding ids are the
    terminator id and never reach the loss or the attention weights.
    """
    pairs: list
    source: np.ndarray
    source_mask: np.ndarray
    target: np.ndarray
    target_mask: np.ndarray

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        size = len(pairs)
        src_len = max(len(p.source_ids) for p in pairs)
        tgt_len = max(len(p.target_ids) for p in pairs)
        source = np.full((size, src_len), EOS_ID, dtype=np.int64)
        target = np.full((size, tgt_len), EOS_ID, dtype=np.int64)
        source_mask = np.zeros((size, src_len), dtype=bool)
        target_mask = np.zeros((size, tgt_len), dtype=bool)
        for row, pair in enumerate(pairs):
            source[row, :len(pair.source_ids)] = pair.source_ids
            target[row, :len(pair.target_ids)] = pair.target_ids
            source_mask[row, :len(pair.source_ids)] = True
            target_mask[row, :len(pair.target_ids)] = True
        return cls(pairs, source, source_mask, target, target_mask)

    @property
    def size(self):
        return len(self.pairs)

    @property
    def source_lengths(self):
        """Attended positions per row, terminator included."""
        return self.source_mask.sum(axis=1)

    @property
    def token_count(self):
        """Predicted target tokens, terminators included, padding excluded."""
        return int(self.target_mask.sum())


def make_batches(pairs, batch_size, max_len=50, rng=None):
    """
    Filter by length, shuffle with ``rng`` (kept in order when ``rng`` is
    None) and cut into batches of at most ``batch_size`` pairs.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    kept = filter_pairs(pairs, max_len)
    order = rng.permutation(len(kept)) if rng is not None else np.arange(len(kept))
    return [
        Batch.from_pairs([kept[i] for i in order[start:start + batch_size]])
        for start in range(0, len(kept), batch_size)
    ]

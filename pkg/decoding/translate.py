"""
Greedy translation and teacher-forced (force) decoding.

Both keep one ``DecodeRecord`` per target step, terminator included. The
weights of a record are over the encoder's source positions in the order
the model read them (reversed words when the model reverses its input,
then the terminator).
"""
import logging
from dataclasses import dataclass

import numpy as np

from core_math.exceptions import ConfigError, DataError
from corpus.pairs import Batch, encode_pair
from corpus.vocab import EOS_ID
from nmt.network import decode_step, encode, initial_feed, sequence_loss

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeRecord:
    token_id: int
    weights: np.ndarray = None   # [S + 1] or None without attention
    position: float = None       # p_t, local-p only

    @property
    def argmax(self):
        return None if self.weights is None else int(np.argmax(self.weights))


@dataclass(frozen=True)
class Translation:
    source_tokens: tuple
    tokens: tuple            # emitted words, terminator excluded
    records: tuple
    truncated: bool = False
    reversed_source: bool = False


def source_ids(model, tokens):
    ids = model.source_vocab.encode(tokens)
    if model.spec.reverse_source:
        ids = ids[::-1]
    return ids + [EOS_ID]


def _padded(rows):
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), EOS_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, row in enumerate(rows):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = True
    return ids, mask


def _record(step, row, token, length):
    if step.attention is None:
        return DecodeRecord(token_id=token)
    position = None
    if step.attention.position is not None:
        position = float(step.attention.position.data[row])
    return DecodeRecord(
        token_id=token,
        weights=step.attention.weights.data[row, :length].copy(),
        position=position,
    )


def greedy_translate_batch(model, sentences, max_len=100):
    """
    Translate every tokenized sentence in ``sentences`` by taking the most
    probable word at each step until ``<eos>`` or ``max_len`` words.
    Finished rows keep stepping with the rest of the batch; their extra
    steps are discarded.
    """
    if max_len < 1:
        raise ConfigError(f"max_len must be at least 1, got {max_len}")
    sentences = [tuple(s) for s in sentences]
    if not sentences:
        return []
    ids, mask = _padded([source_ids(model, s) for s in sentences])
    lengths = mask.sum(axis=1)
    encoded = encode(model, ids, mask)
    state, feed = encoded.final, initial_feed(model, len(sentences))
    prev = np.full(len(sentences), EOS_ID)
    records = [[] for _ in sentences]
    done = np.zeros(len(sentences), dtype=bool)
    for t in range(max_len):
        step = decode_step(model, state, prev, feed, encoded.memory, t)
        chosen = np.argmax(step.log_probs.data, axis=-1)
        for row in np.flatnonzero(~done):
            records[row].append(_record(step, row, int(chosen[row]), lengths[row]))
        done |= chosen == EOS_ID
        if done.all():
            break
        state, feed, prev = step.state, step.feed, chosen
    out = []
    for sentence, recs in zip(sentences, records):
        truncated = recs[-1].token_id != EOS_ID
        words = [r.token_id for r in recs if r.token_id != EOS_ID]
        if truncated:
            logger.debug(f"Translation truncated at {max_len} words: {' '.join(sentence)[:60]}")
        out.append(Translation(
            source_tokens=sentence,
            tokens=tuple(model.target_vocab.decode(words)),
            records=tuple(recs),
            truncated=truncated,
            reversed_source=model.spec.reverse_source,
        ))
    return out


def greedy_translate(model, source_tokens, max_len=100):
    return greedy_translate_batch(model, [source_tokens], max_len)[0]


def force_decode_batch(model, pairs):
    """
    Teacher-forced pass over the reference of each ``(source, reference)``
    pair, recording the attention at every step. Nothing is sampled.
    """
    if model.spec.attention is None:
        raise ConfigError('force decoding needs an attentional model')
    encoded_pairs = []
    for source, reference in pairs:
        if not reference:
            raise DataError(f"empty reference for source: {' '.join(source)[:60]}")
        encoded_pairs.append(encode_pair(
            source, reference, model.source_vocab, model.target_vocab, model.spec.reverse_source,
        ))
    if not encoded_pairs:
        return []
    batch = Batch.from_pairs(encoded_pairs)
    result = sequence_loss(model, batch, train=False)
    out = []
    for row, pair in enumerate(encoded_pairs):
        length = len(pair.source_ids)
        recs = []
        for t, token in enumerate(pair.target_ids):
            step = result.records[t]
            recs.append(DecodeRecord(
                token_id=token,
                weights=step.weights.data[row, :length].copy(),
                position=None if step.position is None else float(step.position.data[row]),
            ))
        out.append(tuple(recs))
    return out


def force_decode(model, source_tokens, reference_tokens):
    return force_decode_batch(model, [(source_tokens, reference_tokens)])[0]

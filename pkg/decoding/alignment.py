"""
From per-step attention to word alignments.

Which target word a step's weights belong to depends on the score
function. A location score looks only at the state that predicts y_t, so
row t is credited to y_t. Content scores compare the source with a state
whose input was y_{t-1}, so row t is credited to y_{t-1}: the first row
(input: the start terminator) has no word and is dropped, and the row of
the step that emits the terminator goes to the last word.
"""
import logging
from dataclasses import dataclass

import numpy as np

from attention.config import Score
from core_math.exceptions import DataError
from corpus.vocab import EOS_ID, UNK

logger = logging.getLogger(__name__)


def restore_source_order(weights, reversed_source):
    """
    Map weight columns from the order the encoder read to the original word
    order. The terminator column stays last. Applying it twice to reversed
    columns gives back the reversed order.
    """
    weights = np.asarray(weights)
    if not reversed_source:
        return weights
    words = weights[..., :-1][..., ::-1]
    return np.concatenate([words, weights[..., -1:]], axis=-1)


@dataclass(frozen=True)
class AlignmentMatrix:
    """
    ``weights[t, s]``: attention credited to target word t on source word s
    in original order; the last column is the source terminator. ``links``
    holds one ``(t, s)`` per target word, s the highest-weighted source
    word (the terminator column never wins).
    """
    weights: np.ndarray
    links: tuple

    @property
    def target_length(self):
        return self.weights.shape[0]

    @property
    def source_length(self):
        return self.weights.shape[1] - 1

    def link_map(self):
        return dict(self.links)


def _word_count(records):
    if records and records[-1].token_id == EOS_ID:
        return len(records) - 1
    return len(records)


def attribute_alignments(records, score_kind, reversed_source=False):
    """Build the target-word by source-word matrix and its argmax links from decode records."""
    if any(r.weights is None for r in records):
        raise DataError('alignment needs attention weights on every record')
    words = _word_count(records)
    rows = [np.asarray(r.weights, dtype=np.float64) for r in records]
    if score_kind == Score.LOCATION:
        picked = rows[:words]
    else:
        picked = rows[1:words + 1]
        if len(picked) < words:
            # truncated output: the last word has no following step
            picked.append(rows[words - 1])
    if not picked:
        width = len(rows[0]) if rows else 1
        return AlignmentMatrix(weights=np.zeros((0, width)), links=())
    matrix = restore_source_order(np.stack(picked), reversed_source)
    links = ()
    if matrix.shape[1] > 1:
        links = tuple((t, int(np.argmax(matrix[t, :-1]))) for t in range(words))
    return AlignmentMatrix(weights=matrix, links=links)


def unk_replace(target_tokens, matrix, source_tokens):
    """Copy the aligned source word over every ``<unk>`` in the output."""
    links = matrix.link_map()
    out = []
    for t, token in enumerate(target_tokens):
        if token == UNK and t in links and links[t] < len(source_tokens):
            out.append(source_tokens[links[t]])
        else:
            out.append(token)
    return out


def format_links(links):
    """Pharaoh ``t-s`` pairs, 0-based, target first."""
    return ' '.join(f"{t}-{s}" for t, s in sorted(links))


def parse_links(line):
    """
    Parse one Pharaoh line into ``(sure, possible)`` sets; ``t-s`` is a sure
    link and ``t?s`` a possible one.
    """
    sure, possible = set(), set()
    for item in line.split():
        separator = '?' if '?' in item else '-'
        try:
            t, s = (int(v) for v in item.split(separator))
        except ValueError:
            raise DataError(f"bad alignment link {item!r}") from None
        if t < 0 or s < 0:
            raise DataError(f"negative index in alignment link {item!r}")
        (possible if separator == '?' else sure).add((t, s))
    return sure, possible

"""Corpus-level, case-sensitive 4-gram BLEU on tokenized text, without smoothing."""
import math
from collections import Counter
from dataclasses import dataclass

from core_math.exceptions import DataError

MAX_ORDER = 4


def ngrams(tokens, order):
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


@dataclass(frozen=True)
class BleuReport:
    matches: tuple          # clipped n-gram matches per order
    totals: tuple           # candidate n-grams per order
    candidate_length: int
    reference_length: int

    @property
    def precisions(self):
        return tuple(m / t if t else 0.0 for m, t in zip(self.matches, self.totals))

    @property
    def brevity_penalty(self):
        c, r = self.candidate_length, self.reference_length
        if c == 0:
            return 0.0
        return min(1.0, math.exp(1.0 - r / c))

    @property
    def score(self):
        if any(p == 0.0 for p in self.precisions):
            return 0.0
        return 100.0 * self.brevity_penalty * math.exp(sum(math.log(p) for p in self.precisions) / MAX_ORDER)

    def __str__(self):
        precisions = '/'.join(f"{100 * p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.score:.2f}, {precisions} (BP={self.brevity_penalty:.3f}, "
            f"hyp_len={self.candidate_length}, ref_len={self.reference_length})"
        )


def bleu(candidates, references):
    """``candidates`` and ``references`` are equal-length lists of token lists."""
    if len(candidates) != len(references):
        raise DataError(f"{len(candidates)} candidates but {len(references)} references")
    if not candidates:
        raise DataError('BLEU of an empty corpus is undefined')
    matches, totals = [0] * MAX_ORDER, [0] * MAX_ORDER
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for order in range(1, MAX_ORDER + 1):
            cand_counts = ngrams(cand, order)
            ref_counts = ngrams(ref, order)
            matches[order - 1] += sum((cand_counts & ref_counts).values())
            totals[order - 1] += max(0, len(cand) - order + 1)
    return BleuReport(tuple(matches), tuple(totals), cand_len, ref_len)

"""BLEU per source-length group."""
import logging
import math
from dataclasses import dataclass

from core_math.exceptions import ConfigError, DataError

from .bleu import bleu

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Bucket:
    low: int
    high: float             # exclusive; math.inf for the last bucket
    sentences: int
    report: object = None   # BleuReport, None when the bucket is empty

    @property
    def present(self):
        return self.report is not None

    @property
    def label(self):
        high = 'inf' if math.isinf(self.high) else int(self.high)
        return f"[{self.low},{high})"


def length_buckets(sources, references, translations, edges):
    """
    Group sentences by source length (words, terminator excluded) into
    ``[edges[i], edges[i+1])`` with the last bucket open-ended, and score
    each group with corpus BLEU. Empty groups are reported absent.
    """
    edges = list(edges)
    if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError(f"bucket edges must be strictly increasing, got {edges}")
    if not (len(sources) == len(references) == len(translations)):
        raise DataError(
            f"{len(sources)} sources, {len(references)} references and {len(translations)} translations"
        )
    bounds = list(zip(edges, edges[1:] + [math.inf]))
    groups = [([], []) for _ in bounds]
    for source, reference, hypothesis in zip(sources, references, translations):
        for index, (low, high) in enumerate(bounds):
            if low <= len(source) < high:
                groups[index][0].append(hypothesis)
                groups[index][1].append(reference)
                break
        else:
            logger.debug(f"Source length {len(source)} below the first bucket edge {edges[0]}")
    buckets = []
    for (low, high), (hyps, refs) in zip(bounds, groups):
        report = bleu(hyps, refs) if hyps else None
        buckets.append(Bucket(low=low, high=high, sentences=len(hyps), report=report))
    return buckets


def bucket_table(buckets):
    """Tab-separated ``bucket, sentences, bleu`` rows; absent buckets print ``-``."""
    lines = ['bucket\tsentences\tbleu']
    for bucket in buckets:
        score = f"{bucket.report.score:.2f}" if bucket.present else '-'
        lines.append(f"{bucket.label}\t{bucket.sentences}\t{score}")
    return '\n'.join(lines) + '\n'

"""Alignment error rate against sure/possible gold links."""
from dataclasses import dataclass, field

from core_math.exceptions import DataError
from corpus.vocab import read_lines
from decoding.alignment import parse_links


@dataclass
class GoldAlignment:
    """Per sentence: sure links and possible links, as ``(t, s)`` sets."""
    sure: list = field(default_factory=list)
    possible: list = field(default_factory=list)

    def __len__(self):
        return len(self.sure)

    @classmethod
    def from_lines(cls, lines):
        gold = cls()
        for line in lines:
            sure, possible = parse_links(line)
            gold.sure.append(sure)
            gold.possible.append(possible)
        return gold

    @classmethod
    def load(cls, path):
        try:
            lines = read_lines(path)
        except (OSError, UnicodeDecodeError) as exc:
            raise DataError(f"cannot read alignment file {path}: {exc}") from exc
        return cls.from_lines(lines)

    def check_bounds(self, target_lengths, source_lengths):
        """Every gold link must fall inside its sentence pair; sentence counts must agree."""
        if not len(self) == len(target_lengths) == len(source_lengths):
            raise DataError(
                f"gold alignment has {len(self)} sentences, corpus has "
                f"{len(target_lengths)} targets and {len(source_lengths)} sources"
            )
        for i, links in enumerate(self.sure):
            for t, s in links | self.possible[i]:
                if t >= target_lengths[i] or s >= source_lengths[i]:
                    raise DataError(
                        f"gold link {t}-{s} in sentence {i} outside "
                        f"{target_lengths[i]}x{source_lengths[i]}"
                    )


def aer(predicted, sure, possible=()):
    """
    ``1 - (|A & S| + |A & (S | P)|) / (|A| + |S|)`` over whole corpora:
    every argument is one link set per sentence.
    """
    if not (len(predicted) == len(sure) and (not possible or len(possible) == len(sure))):
        raise DataError(f"alignment sets cover {len(predicted)} and {len(sure)} sentences")
    possible = possible or [set()] * len(sure)
    hit_sure = hit_possible = size_a = size_s = 0
    for a, s, p in zip(predicted, sure, possible):
        a, s = set(a), set(s)
        hit_sure += len(a & s)
        hit_possible += len(a & (s | set(p)))
        size_a += len(a)
        size_s += len(s)
    if size_a + size_s == 0:
        raise DataError('AER is undefined when both link sets are empty')
    return 1.0 - (hit_sure + hit_possible) / (size_a + size_s)

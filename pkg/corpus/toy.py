"""
Synthetic reverse-copy corpus: the target is the source read backwards.

The gold alignment is therefore known exactly: target word ``t`` of a
sentence with ``n`` words aligns to source word ``n - 1 - t``.
"""
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def toy_symbols(count):
    return [f"w{i}" for i in range(count)]


def reverse_copy_pairs(size, rng, symbols=20, min_len=5, max_len=15):
    alphabet = toy_symbols(symbols)
    pairs = []
    for _ in range(size):
        length = int(rng.integers(min_len, max_len + 1))
        source = [alphabet[i] for i in rng.integers(0, symbols, size=length)]
        pairs.append((source, source[::-1]))
    return pairs


def gold_links(length):
    return [(t, length - 1 - t) for t in range(length)]


def write_toy_corpus(directory, train_size, test_size, rng, symbols=20, min_len=5, max_len=15):
    """
    Write ``train.src/.tgt``, ``test.src/.tgt`` and ``test.align`` (Pharaoh,
    sure links only) under ``directory``. Returns the written paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, size in (('train', train_size), ('test', test_size)):
        pairs = reverse_copy_pairs(size, rng, symbols, min_len, max_len)
        for side, index in (('src', 0), ('tgt', 1)):
            path = directory / f"{split}.{side}"
            path.write_text(''.join(' '.join(p[index]) + '\n' for p in pairs), encoding='utf-8')
            paths[f"{split}_{side}"] = path
        if split == 'test':
            path = directory / 'test.align'
            path.write_text(
                ''.join(' '.join(f"{t}-{s}" for t, s in gold_links(len(p[0]))) + '\n' for p in pairs),
                encoding='utf-8',
            )
            paths['test_align'] = path
        logger.info(f"Wrote {size} {split} pairs to {directory}")
    return paths

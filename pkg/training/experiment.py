"""
Experiment setup shared by the ``train`` and ``compare`` commands, and the
architecture comparison itself: several attention variants trained on the
same data with the same seed, then scored side by side.
"""
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from corpus.pairs import load_pairs
from corpus.vocab import Vocabulary, build_vocab, read_sentences
from decoding.alignment import attribute_alignments
from decoding.translate import force_decode_batch, greedy_translate_batch
from evaluation.aer import GoldAlignment, aer
from evaluation.accuracy import token_accuracy
from evaluation.bleu import bleu
from nmt.network import NmtModel

from .trainer import train

logger = logging.getLogger(__name__)


def seeded_rngs(seed):
    """Independent generators for parameter initialization and for training."""
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(train_seq)


def load_vocabularies(config, source_corpus, target_corpus, source_vocab=None, target_vocab=None):
    src = Vocabulary.load(source_vocab) if source_vocab else build_vocab(source_corpus, config.vocab_size)
    tgt = Vocabulary.load(target_vocab) if target_vocab else build_vocab(target_corpus, config.vocab_size)
    return src, tgt


def build_model(config, source_vocab, target_vocab, rng):
    spec = config.model_spec(len(source_vocab), len(target_vocab))
    return NmtModel.initialize(spec, source_vocab, target_vocab, rng, config.init_scale)


def train_from_files(config, paths, output_dir, on_epoch=None):
    """
    ``paths`` names ``train_src``, ``train_tgt``, optional ``eval_src`` /
    ``eval_tgt`` and optional ``src_vocab`` / ``tgt_vocab`` files.
    Returns ``(model, log)``.
    """
    source_vocab, target_vocab = load_vocabularies(
        config, paths['train_src'], paths['train_tgt'], paths.get('src_vocab'), paths.get('tgt_vocab'),
    )
    train_pairs = load_pairs(
        paths['train_src'], paths['train_tgt'], source_vocab, target_vocab, config.reverse_source,
    )
    eval_pairs = []
    if paths.get('eval_src') and paths.get('eval_tgt'):
        eval_pairs = load_pairs(
            paths['eval_src'], paths['eval_tgt'], source_vocab, target_vocab, config.reverse_source,
        )
    init_rng, train_rng = seeded_rngs(config.seed)
    model = build_model(config, source_vocab, target_vocab, init_rng)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    source_vocab.save(output_dir / 'src.vocab')
    target_vocab.save(output_dir / 'tgt.vocab')
    logger.info(
        f"Training {config.attention}/{config.score} on {len(train_pairs)} pairs "
        f"(vocab {len(source_vocab)}/{len(target_vocab)}, {config.layers}x{config.cells})"
    )
    log = train(model, train_pairs, eval_pairs, config.trainer_config(), output_dir, train_rng, on_epoch)
    return model, log


@dataclass(frozen=True)
class Variant:
    attention: str = 'global'
    score: str = 'dot'
    input_feeding: bool = True

    @classmethod
    def parse(cls, text):
        """``none``, ``global:dot``, ``local-p:general:nofeed`` and the like."""
        parts = text.strip().split(':')
        attention = parts[0].replace('-', '_')
        score = parts[1] if len(parts) > 1 and parts[1] != 'nofeed' else 'dot'
        return cls(attention=attention, score=score, input_feeding='nofeed' not in parts[1:])

    @property
    def label(self):
        if self.attention == 'none':
            base = 'none'
        else:
            base = f"{self.attention.replace('_', '-')}-{self.score}"
        return base if self.input_feeding else f"{base}-nofeed"


DEFAULT_VARIANTS = (
    Variant('none'),
    Variant('global', 'location'),
    Variant('global', 'dot'),
    Variant('global', 'general'),
    Variant('local_m', 'dot'),
    Variant('local_p', 'general'),
    Variant('global', 'dot', input_feeding=False),
)


@dataclass(frozen=True)
class CompareRow:
    label: str
    perplexity: float
    bleu: float
    accuracy: float
    aer: float = None

    def row(self):
        aer_text = '-' if self.aer is None else f"{self.aer:.4f}"
        return f"{self.label}\t{self.perplexity:.4f}\t{self.bleu:.2f}\t{self.accuracy:.4f}\t{aer_text}"


def compare_table(rows):
    return '\n'.join(['variant\tppl\tbleu\taccuracy\taer'] + [r.row() for r in rows]) + '\n'


def check_gold(gold, sources, references):
    gold.check_bounds([len(r) for r in references], [len(s) for s in sources])


def score_model(model, config, test_src, test_tgt, gold=None):
    """Greedy BLEU and accuracy on the test set, and AER through force decoding when gold links are given."""
    sources = read_sentences(test_src)
    references = read_sentences(test_tgt)
    if gold is not None:
        check_gold(gold, sources, references)
    hypotheses = []
    for start in range(0, len(sources), config.batch_size):
        chunk = sources[start:start + config.batch_size]
        hypotheses += [list(t.tokens) for t in greedy_translate_batch(model, chunk, config.decode_max_len)]
    report = bleu(hypotheses, references)
    accuracy = token_accuracy(hypotheses, references)
    error_rate = None
    if gold is not None and model.spec.attention is not None:
        predicted = []
        pairs = list(zip(sources, references))
        for start in range(0, len(pairs), config.batch_size):
            for records in force_decode_batch(model, pairs[start:start + config.batch_size]):
                matrix = attribute_alignments(records, model.spec.attention.score, model.spec.reverse_source)
                predicted.append(set(matrix.links))
        error_rate = aer(predicted, gold.sure, gold.possible)
    return report, accuracy, error_rate


def compare_variants(base_config, paths, output_dir, variants=DEFAULT_VARIANTS):
    """Train and score every variant under ``output_dir/<label>``; returns one ``CompareRow`` each."""
    gold = None
    if paths.get('gold_align'):
        gold = GoldAlignment.load(paths['gold_align'])
        check_gold(gold, read_sentences(paths['test_src']), read_sentences(paths['test_tgt']))
    rows = []
    for variant in variants:
        config = dataclasses.replace(
            base_config,
            attention=variant.attention,
            score=variant.score,
            input_feeding=variant.input_feeding,
        ).validate()
        variant_paths = dict(paths, eval_src=paths['test_src'], eval_tgt=paths['test_tgt'])
        model, log = train_from_files(config, variant_paths, Path(output_dir) / variant.label)
        report, accuracy, error_rate = score_model(model, config, paths['test_src'], paths['test_tgt'], gold)
        rows.append(CompareRow(variant.label, log.last.ppl, report.score, accuracy, error_rate))
        logger.info(f"{variant.label}: ppl {log.last.ppl:.3f} BLEU {report.score:.2f}")
    return rows

import math
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from attention.config import AttentionConfig
from cli.run_config import resolve
from core_math.exceptions import ConfigError, DataError, NumericalError
from core_math.tensor import Tape, Tensor
from corpus.pairs import Batch, encode_pair
from corpus.toy import write_toy_corpus
from corpus.vocab import Vocabulary, read_sentences
from decoding.alignment import attribute_alignments
from decoding.translate import force_decode_batch, greedy_translate_batch
from evaluation.aer import GoldAlignment, aer
from evaluation.accuracy import token_accuracy
from nmt.container import to_bytes
from nmt.network import ModelSpec, NmtModel, sequence_loss
from training.experiment import Variant, compare_table, compare_variants, train_from_files
from training.schedule import TrainerConfig, lr_at
from training.trainer import EpochRecord, TrainLog, clip_and_step, global_norm, train, train_batch


def toy_model(attention=AttentionConfig(), seed=0, cells=8, symbols=6):
    vocab = Vocabulary(['<unk>', '<eos>'] + [f"w{i}" for i in range(symbols)])
    spec = ModelSpec(layers=1, cells=cells, src_vocab_size=len(vocab), tgt_vocab_size=len(vocab),
                     attention=attention)
    return NmtModel.initialize(spec, vocab, vocab, np.random.default_rng(seed), 0.1)


def toy_pairs(model, count, seed=0, symbols=6):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        words = [f"w{i}" for i in rng.integers(0, symbols, size=int(rng.integers(2, 5)))]
        pairs.append(encode_pair(words, words[::-1], model.source_vocab, model.target_vocab, True))
    return pairs


class ScheduleTestCase(SimpleTestCase):
    """Test cases for the learning-rate schedule"""

    def test_default_schedule(self):
        """1.0 for epochs 1-5, then halved every epoch"""
        config = TrainerConfig()
        self.assertEqual([lr_at(config, e) for e in range(1, 6)], [1.0] * 5)
        self.assertEqual(lr_at(config, 6), 0.5)
        self.assertEqual(lr_at(config, 8), 0.125)
        self.assertEqual(lr_at(config, 10), 1 / 32)

    def test_dropout_schedule(self):
        """With dropout the halving starts after epoch 8 of 12"""
        config = resolve('train', overrides={'dropout': 0.2}).trainer_config()
        self.assertEqual(config.epochs, 12)
        self.assertEqual(lr_at(config, 8), 1.0)
        self.assertEqual(lr_at(config, 9), 0.5)

    def test_epoch_out_of_range(self):
        """Epochs outside 1..epochs are rejected"""
        with self.assertRaises(ConfigError):
            lr_at(TrainerConfig(), 0)
        with self.assertRaises(ConfigError):
            lr_at(TrainerConfig(), 11)

    def test_invalid_configs(self):
        """halve_after must precede the last epoch; dropout stays below 1; normalization is sentence or token"""
        with self.assertRaises(ConfigError):
            TrainerConfig(epochs=5, halve_after=5)
        with self.assertRaises(ConfigError):
            TrainerConfig(dropout=1.0)
        with self.assertRaises(ConfigError):
            TrainerConfig(lr=0.0)
        with self.assertRaises(ConfigError):
            TrainerConfig(loss_normalization='batch')


class ClippingTestCase(SimpleTestCase):
    """Test cases for global-norm clipping and the SGD step"""

    def setUp(self):
        self.params = {'a': Tensor(np.zeros(2)), 'b': Tensor(np.zeros((1, 1)))}

    def test_small_gradient_unscaled(self):
        """A norm of 3 stays as it is"""
        grads = {'a': np.array([3.0, 0.0]), 'b': np.zeros((1, 1))}
        before, after = clip_and_step(self.params, grads, 1.0, 5.0)
        self.assertEqual((before, after), (3.0, 3.0))
        np.testing.assert_array_equal(self.params['a'].data, [-3.0, 0.0])

    def test_large_gradient_rescaled_to_threshold(self):
        """A norm of 10 is rescaled to exactly 5 across all tensors"""
        grads = {'a': np.array([6.0, 0.0]), 'b': np.array([[8.0]])}
        before, after = clip_and_step(self.params, grads, 1.0, 5.0)
        self.assertEqual(before, 10.0)
        self.assertLessEqual(after, 5.0 + 1e-9)
        np.testing.assert_allclose(self.params['a'].data, [-3.0, 0.0])
        np.testing.assert_allclose(self.params['b'].data, [[-4.0]])

    def test_random_gradients_never_exceed_threshold(self):
        """Post-clip norm <= clip_norm + 1e-9 whenever the pre-clip norm is larger"""
        rng = np.random.default_rng(0)
        for _ in range(100):
            grads = {'a': rng.normal(scale=10, size=2), 'b': rng.normal(scale=10, size=(1, 1))}
            before, after = clip_and_step(self.params, grads, 1e-3, 5.0)
            if before > 5.0:
                scaled = {k: v * (5.0 / before) for k, v in grads.items()}
                self.assertLessEqual(global_norm(scaled), 5.0 + 1e-9)
                self.assertLessEqual(after, 5.0 + 1e-9)

    def test_zero_gradient(self):
        """A zero gradient leaves parameters alone"""
        self.params['a'].data[...] = [1.0, 2.0]
        clip_and_step(self.params, {'a': np.zeros(2), 'b': np.zeros((1, 1))}, 1.0, 5.0)
        np.testing.assert_array_equal(self.params['a'].data, [1.0, 2.0])

    def test_non_finite_gradient(self):
        """NaN gradients abort the step"""
        with self.assertRaises(NumericalError):
            clip_and_step(self.params, {'a': np.array([np.nan, 0.0])}, 1.0, 5.0)


class TrainerTestCase(SimpleTestCase):
    """Test cases for training steps and runs"""

    def test_small_step_decreases_loss(self):
        """One SGD step at lr=1e-3 lowers the loss of the example it was taken on"""
        model = toy_model()
        batch = Batch.from_pairs(toy_pairs(model, 1))
        before = sequence_loss(model, batch).loss.item()
        train_batch(model, batch, 1e-3, 5.0, np.random.default_rng(0))
        self.assertLess(sequence_loss(model, batch).loss.item(), before)

    def test_gradient_is_mean_over_sentences(self):
        """The update uses the summed-loss gradient divided by the batch size"""
        model = toy_model()
        batch = Batch.from_pairs(toy_pairs(model, 4))
        model.requires_grad_(True)
        with Tape() as tape:
            loss = sequence_loss(model, batch).loss
        tape.backward(loss)
        summed = model.params['output.w_s'].grad.copy()
        model.zero_grad()
        before = model.params['output.w_s'].data.copy()
        train_batch(model, batch, 1e-3, 1e9, np.random.default_rng(0))
        np.testing.assert_allclose(before - model.params['output.w_s'].data, 1e-3 * summed / 4, rtol=1e-6, atol=1e-14)

    def test_token_normalization_divides_by_target_tokens(self):
        """With token normalization the summed-loss gradient is divided by the target token count"""
        model = toy_model()
        batch = Batch.from_pairs(toy_pairs(model, 4))
        model.requires_grad_(True)
        with Tape() as tape:
            result = sequence_loss(model, batch)
        tape.backward(result.loss)
        summed = model.params['output.w_s'].grad.copy()
        model.zero_grad()
        before = model.params['output.w_s'].data.copy()
        train_batch(model, batch, 1e-3, 1e9, np.random.default_rng(0), normalization='token')
        self.assertGreater(result.tokens, batch.size)
        np.testing.assert_allclose(
            before - model.params['output.w_s'].data, 1e-3 * summed / result.tokens, rtol=1e-6, atol=1e-14,
        )

    def test_non_finite_loss_reports_batch(self):
        """A NaN parameter surfaces as NumericalError with the batch index"""
        model = toy_model()
        model.params['output.w_s'].data[0, 0] = np.nan
        with self.assertRaises(NumericalError) as ctx:
            train_batch(model, Batch.from_pairs(toy_pairs(model, 2)), 1.0, 5.0, None, epoch=3, batch_index=7)
        self.assertEqual((ctx.exception.epoch, ctx.exception.batch_index), (3, 7))

    def test_train_log_and_checkpoints(self):
        """One record per epoch, lr column equal to lr_at, checkpoint per epoch"""
        model = toy_model()
        pairs = toy_pairs(model, 24)
        config = TrainerConfig(epochs=3, halve_after=1, batch_size=8, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            log = train(model, pairs[:20], pairs[20:], config, output_dir=tmp)
            names = sorted(p.name for p in Path(tmp).iterdir())
            self.assertEqual(names, ['epoch1.nmt', 'epoch2.nmt', 'epoch3.nmt', 'latest.nmt', 'train_log.tsv'])
            self.assertEqual(Path(tmp, 'latest.nmt').read_bytes(), Path(tmp, 'epoch3.nmt').read_bytes())
            lines = Path(tmp, 'train_log.tsv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0].split('\t'), ['epoch', 'loss', 'ppl', 'ln_ppl', 'lr', 'seconds'])
        self.assertEqual(len(log), 3)
        self.assertEqual(log.column('lr'), [lr_at(config, e) for e in (1, 2, 3)])
        for record in log:
            self.assertAlmostEqual(record.ln_ppl, math.log(record.ppl))

    def test_training_improves_perplexity(self):
        """A few epochs on a copy task lower held-out perplexity"""
        model = toy_model(cells=16)
        pairs = toy_pairs(model, 120, seed=3)
        config = TrainerConfig(epochs=4, halve_after=3, batch_size=8, seed=2)
        log = train(model, pairs[:100], pairs[100:], config)
        self.assertLess(log.records[-1].ppl, log.records[0].ppl)

    def run_twice(self, dropout, normalization='sentence'):
        outputs = []
        for _ in range(2):
            model = toy_model(attention=AttentionConfig('local_p', 'general', window=2))
            pairs = toy_pairs(model, 30)
            config = TrainerConfig(epochs=2, halve_after=1, batch_size=8, dropout=dropout, seed=9,
                                   loss_normalization=normalization)
            log = train(model, pairs[:24], pairs[24:], config)
            outputs.append((log.to_tsv(include_time=False), to_bytes(model)))
        return outputs

    def test_same_seed_same_run(self):
        """Identical seeds give identical logs (time aside) and identical models"""
        outputs = self.run_twice(0.0)
        self.assertEqual(outputs[0], outputs[1])

    def test_same_seed_same_run_with_dropout(self):
        """Dropout masks come from the seeded generator, so dropout runs repeat too"""
        outputs = self.run_twice(0.3, normalization='token')
        self.assertEqual(outputs[0], outputs[1])
        self.assertNotEqual(outputs[0][1], self.run_twice(0.0, normalization='token')[0][1])

    def test_trainer_dropout_reaches_the_model(self):
        """The trainer's dropout is applied to, and saved with, the model"""
        model = toy_model()
        pairs = toy_pairs(model, 12)
        train(model, pairs, [], TrainerConfig(epochs=2, halve_after=1, batch_size=4, dropout=0.25, seed=3))
        self.assertEqual(model.spec.dropout, 0.25)

    def test_train_log_is_append_only_in_order(self):
        """Records must arrive one epoch at a time"""
        log = TrainLog()
        log.append(EpochRecord(1, 1.0, 2.0, math.log(2.0), 1.0, 0.1))
        with self.assertRaises(ValueError):
            log.append(EpochRecord(3, 1.0, 2.0, math.log(2.0), 1.0, 0.1))


class ExperimentTestCase(SimpleTestCase):
    """Test cases for file-driven training and the comparison harness"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.paths = write_toy_corpus(Path(self.tmp.name, 'data'), 40, 8, np.random.default_rng(0),
                                      symbols=5, min_len=2, max_len=4)

    def config(self, **overrides):
        values = dict(layers=1, cells=8, epochs=2, halve_after=1, batch_size=8, vocab_size=20)
        values.update(overrides)
        return resolve('train', overrides=values)

    def test_variant_labels(self):
        """Variant strings parse into mechanism, score and feeding"""
        self.assertEqual(Variant.parse('local-p:general').label, 'local-p-general')
        self.assertEqual(Variant.parse('global:dot:nofeed').input_feeding, False)
        self.assertEqual(Variant.parse('none').label, 'none')

    def test_train_from_files(self):
        """Vocabularies and checkpoints land in the output directory"""
        paths = {'train_src': self.paths['train_src'], 'train_tgt': self.paths['train_tgt'],
                 'eval_src': self.paths['test_src'], 'eval_tgt': self.paths['test_tgt']}
        out = Path(self.tmp.name, 'run')
        model, log = train_from_files(self.config(), paths, out)
        self.assertEqual(len(log), 2)
        self.assertTrue((out / 'src.vocab').is_file())
        self.assertTrue((out / 'latest.nmt').is_file())
        self.assertEqual(len(model.source_vocab), 2 + 5)

    def test_compare_variants(self):
        """Every variant gets a row; AER only where there is attention"""
        paths = {key: self.paths[key] for key in ('train_src', 'train_tgt', 'test_src', 'test_tgt')}
        paths['gold_align'] = self.paths['test_align']
        variants = [Variant.parse('none'), Variant.parse('global:dot')]
        rows = compare_variants(self.config(), paths, Path(self.tmp.name, 'cmp'), variants)
        self.assertEqual([r.label for r in rows], ['none', 'global-dot'])
        self.assertIsNone(rows[0].aer)
        self.assertTrue(0.0 <= rows[1].aer <= 1.0)
        self.assertEqual(len(compare_table(rows).splitlines()), 3)

    def test_gold_must_match_the_test_set(self):
        """A gold file with missing sentences or out-of-range links is refused before any training"""
        paths = {key: self.paths[key] for key in ('train_src', 'train_tgt', 'test_src', 'test_tgt')}
        gold_lines = Path(self.paths['test_align']).read_text(encoding='utf-8').split('\n')
        short = Path(self.tmp.name, 'short.align')
        short.write_text('\n'.join(gold_lines[:3]) + '\n', encoding='utf-8')
        wide = Path(self.tmp.name, 'wide.align')
        wide.write_text('\n'.join(['0-9'] + gold_lines[1:8]) + '\n', encoding='utf-8')
        for gold in (short, wide):
            with self.subTest(gold=gold.name):
                out = Path(self.tmp.name, gold.stem)
                with self.assertRaises(DataError):
                    compare_variants(self.config(), dict(paths, gold_align=str(gold)), out,
                                     [Variant.parse('global:dot')])
                self.assertFalse(out.exists())


@tag('acceptance')
@unittest.skipUnless(os.environ.get('NMT_RUN_ACCEPTANCE') == '1', 'set NMT_RUN_ACCEPTANCE=1')
class ToyAcceptanceTestCase(SimpleTestCase):
    """Full reverse-copy runs: 10k pairs, 2x64 models, 15 epochs"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.paths = write_toy_corpus(Path(cls.tmp.name, 'data'), 10000, 1000, np.random.default_rng(1234))
        cls.sources = read_sentences(cls.paths['test_src'])
        cls.references = read_sentences(cls.paths['test_tgt'])
        cls.runs = {attention: cls.run_variant(attention) for attention in ('global', 'none')}

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    @classmethod
    def run_variant(cls, attention):
        config = resolve('train', overrides={
            'attention': attention, 'score': 'dot', 'epochs': 15, 'halve_after': 12, 'vocab_size': 30,
            'batch_size': 48, 'loss_normalization': 'token',
        })
        paths = {'train_src': cls.paths['train_src'], 'train_tgt': cls.paths['train_tgt'],
                 'eval_src': cls.paths['test_src'], 'eval_tgt': cls.paths['test_tgt']}
        return train_from_files(config, paths, Path(cls.tmp.name, attention))

    def accuracy(self, model):
        hyps = [list(t.tokens) for t in greedy_translate_batch(model, self.sources, 100)]
        return token_accuracy(hyps, self.references)

    def test_attention_beats_baseline(self):
        """Attention reaches 98% accuracy, 5 points above the baseline"""
        attentional = self.accuracy(self.runs['global'][0])
        baseline = self.accuracy(self.runs['none'][0])
        self.assertGreaterEqual(attentional, 0.98)
        self.assertGreaterEqual(attentional - baseline, 0.05)

    def test_perplexity_separation(self):
        """Attentional perplexity is lower at every epoch from the fifth on"""
        for a, b in zip(self.runs['global'][1].records[4:], self.runs['none'][1].records[4:]):
            self.assertLess(a.ppl, b.ppl)

    def test_alignments_follow_the_reversal(self):
        """Force-decoded links hit the reversed diagonal on 80% of positions; AER <= 0.2"""
        model = self.runs['global'][0]
        pairs = list(zip(self.sources, self.references))[:200]
        gold = GoldAlignment.load(self.paths['test_align'])
        predicted = [
            set(attribute_alignments(records, model.spec.attention.score, model.spec.reverse_source).links)
            for records in force_decode_batch(model, pairs)
        ]
        hits = sum(len(p & s) for p, s in zip(predicted, gold.sure))
        self.assertGreaterEqual(hits / sum(len(s) for s in gold.sure[:200]), 0.8)
        self.assertLessEqual(aer(predicted, gold.sure[:200], gold.possible[:200]), 0.2)

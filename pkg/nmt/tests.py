import json
import math
import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from attention.config import AttentionConfig, Mechanism, Score
from core_math.exceptions import DataError, ShapeError
from core_math.gradcheck import check_parameter_gradients
from core_math.tensor import Tensor
from corpus.pairs import Batch, encode_pair
from corpus.vocab import EOS_ID, Vocabulary
from nmt.container import MAGIC, from_bytes, load_model, read_manifest, save_model, to_bytes
from nmt.network import (
    ModelSpec, NmtModel, decode_step, encode, evaluate_perplexity, initial_feed, sequence_loss,
)

GRADIENT_CONFIGS = (
    AttentionConfig(Mechanism.GLOBAL, Score.DOT),
    AttentionConfig(Mechanism.GLOBAL, Score.GENERAL),
    AttentionConfig(Mechanism.GLOBAL, Score.CONCAT),
    AttentionConfig(Mechanism.GLOBAL, Score.LOCATION, s_max=6),
    AttentionConfig(Mechanism.LOCAL_M, Score.DOT, window=1),
    AttentionConfig(Mechanism.LOCAL_M, Score.GENERAL, window=1),
    AttentionConfig(Mechanism.LOCAL_P, Score.DOT, window=1),
    AttentionConfig(Mechanism.LOCAL_P, Score.GENERAL, window=1),
)


def tiny_vocab(size=11):
    return Vocabulary(['<unk>', '<eos>'] + [f"w{i}" for i in range(size - 2)])


def tiny_model(attention=None, input_feeding=True, seed=0, layers=2, cells=8, vocab=11,
               scale=0.3, dropout=0.0, reverse_source=True):
    v = tiny_vocab(vocab)
    spec = ModelSpec(
        layers=layers, cells=cells, src_vocab_size=vocab, tgt_vocab_size=vocab, attention=attention,
        input_feeding=input_feeding, reverse_source=reverse_source, dropout=dropout,
    )
    return NmtModel.initialize(spec, v, v, np.random.default_rng(seed), scale)


def tiny_batch(model, pairs=(('w0 w1 w2', 'w3 w4 w5'),)):
    encoded = [
        encode_pair(s.split(), t.split(), model.source_vocab, model.target_vocab, model.spec.reverse_source)
        for s, t in pairs
    ]
    return Batch.from_pairs(encoded)


class ModelConstructionTestCase(SimpleTestCase):
    """Test cases for parameter layout"""

    def test_input_feeding_doubles_layer_zero_input(self):
        """Layer 0 of the decoder reads 2n values with input feeding, n without"""
        fed = tiny_model(AttentionConfig(), input_feeding=True)
        plain = tiny_model(AttentionConfig(), input_feeding=False)
        self.assertEqual(fed.params['decoder.0.w_x'].shape, (32, 16))
        self.assertEqual(plain.params['decoder.0.w_x'].shape, (32, 8))
        self.assertEqual(fed.params['decoder.1.w_x'].shape, (32, 8))

    def test_attention_parameters_follow_config(self):
        """Only the tensors a configuration uses are created"""
        names = set(tiny_model(AttentionConfig(Mechanism.LOCAL_P, Score.GENERAL)).params)
        self.assertTrue({'attention.w_c', 'attention.w_a', 'attention.w_p', 'attention.v_p'} <= names)
        self.assertNotIn('attention.v_a', names)
        self.assertFalse(any(n.startswith('attention.') for n in tiny_model(None).params))

    def test_init_range(self):
        """Every parameter starts inside [-scale, scale]"""
        model = tiny_model(AttentionConfig(score=Score.CONCAT), scale=0.1)
        for tensor in model.params.values():
            self.assertLessEqual(np.abs(tensor.data).max(), 0.1)

    def test_shape_check_on_construction(self):
        """A parameter with the wrong shape is refused"""
        model = tiny_model(None)
        params = dict(model.params, **{'output.w_s': Tensor(np.zeros((3, 3)))})
        with self.assertRaises(ShapeError):
            NmtModel(model.spec, model.source_vocab, model.target_vocab, params)


class ForwardTestCase(SimpleTestCase):
    """Test cases for the forward computation"""

    def test_uniform_output_layer_costs_ln_vocab_per_token(self):
        """With W_s = 0 every prediction is uniform: loss = tokens * ln V"""
        model = tiny_model(AttentionConfig())
        model.params['output.w_s'].data[...] = 0.0
        batch = tiny_batch(model, [('w0 w1 w2', 'w3 w4 w5'), ('w1', 'w2 w3')])
        result = sequence_loss(model, batch)
        self.assertEqual(result.tokens, 4 + 3)
        self.assertAlmostEqual(result.loss.item(), 7 * math.log(11), places=10)
        self.assertAlmostEqual(result.perplexity, 11.0, places=8)

    def test_padding_does_not_change_a_sentence(self):
        """A sentence scores the same alone and padded inside a batch"""
        for attention in (AttentionConfig(), AttentionConfig(Mechanism.LOCAL_P, Score.DOT, window=1), None):
            model = tiny_model(attention)
            alone = sequence_loss(model, tiny_batch(model, [('w1', 'w2 w3')])).loss.item()
            both = tiny_batch(model, [('w0 w1 w2 w4 w5', 'w3 w4 w5 w6'), ('w1', 'w2 w3')])
            first = sequence_loss(model, tiny_batch(model, [('w0 w1 w2 w4 w5', 'w3 w4 w5 w6')])).loss.item()
            self.assertAlmostEqual(sequence_loss(model, both).loss.item(), alone + first, places=10)

    def test_encoder_states_stop_at_padding(self):
        """Padded positions repeat the last real state of their row"""
        model = tiny_model(AttentionConfig())
        batch = tiny_batch(model, [('w0 w1 w2', 'w3'), ('w1', 'w3')])
        states = encode(model, batch.source, batch.source_mask).memory.states.data
        np.testing.assert_array_equal(states[1, 2], states[1, 1])
        np.testing.assert_array_equal(states[1, 3], states[1, 1])

    def test_feed_changes_the_next_prediction(self):
        """Perturbing the previous attentional state changes the step's distribution"""
        model = tiny_model(AttentionConfig(), input_feeding=True)
        batch = tiny_batch(model)
        encoded = encode(model, batch.source, batch.source_mask)
        feed = initial_feed(model, 1)
        base = decode_step(model, encoded.final, [EOS_ID], feed, encoded.memory, 0).log_probs.data
        nudged = Tensor(feed.data + 0.1)
        moved = decode_step(model, encoded.final, [EOS_ID], nudged, encoded.memory, 0).log_probs.data
        self.assertGreater(np.abs(base - moved).max(), 1e-6)

        plain = tiny_model(AttentionConfig(), input_feeding=False)
        enc = encode(plain, batch.source, batch.source_mask)
        a = decode_step(plain, enc.final, [EOS_ID], feed, enc.memory, 0).log_probs.data
        b = decode_step(plain, enc.final, [EOS_ID], nudged, enc.memory, 0).log_probs.data
        np.testing.assert_array_equal(a, b)

    def test_dropout_only_in_training(self):
        """Evaluation ignores dropout; training with dropout changes the loss"""
        model = tiny_model(AttentionConfig(), dropout=0.3)
        clean = tiny_model(AttentionConfig(), dropout=0.0)
        batch = tiny_batch(model)
        self.assertEqual(sequence_loss(model, batch).loss.item(), sequence_loss(clean, batch).loss.item())
        noisy = sequence_loss(model, batch, train=True, rng=np.random.default_rng(1)).loss.item()
        self.assertNotEqual(noisy, sequence_loss(clean, batch).loss.item())

    def test_evaluate_perplexity(self):
        """Perplexity over pairs equals exp(total loss / tokens)"""
        model = tiny_model(None)
        batch = tiny_batch(model, [('w0 w1', 'w2'), ('w3', 'w4 w5 w6')])
        expected = math.exp(sequence_loss(model, batch).loss.item() / batch.token_count)
        self.assertAlmostEqual(evaluate_perplexity(model, batch.pairs, batch_size=1), expected, places=9)


class ModelGradientTestCase(SimpleTestCase):
    """Test cases for whole-model gradients against finite differences"""

    def check(self, model, max_coords=4):
        batch = tiny_batch(model)
        errors = check_parameter_gradients(
            lambda: sequence_loss(model, batch).loss, model.parameters(),
            max_coords=max_coords, rng=np.random.default_rng(0), floor=1e-5,
        )
        self.assertLess(max(errors.values()), 1e-4, msg=str(errors))

    def test_every_attention_combination(self):
        """Each mechanism and score combination differentiates correctly"""
        for index, config in enumerate(GRADIENT_CONFIGS):
            with self.subTest(config=config.label):
                self.check(tiny_model(config, seed=index))

    def test_without_attention_or_feeding(self):
        """The plain encoder-decoder and the unfed attentional model"""
        self.check(tiny_model(None))
        self.check(tiny_model(AttentionConfig(score=Score.GENERAL), input_feeding=False))


class ContainerTestCase(SimpleTestCase):
    """Test cases for the model file format"""

    def setUp(self):
        self.model = tiny_model(AttentionConfig(Mechanism.LOCAL_P, Score.GENERAL, window=3))
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_round_trip(self):
        """Parameters, vocabularies and hyperparameters survive a save and load"""
        path = save_model(self.model, Path(self.tmp.name) / 'm.nmt')
        loaded = load_model(path)
        self.assertEqual(loaded.spec, self.model.spec)
        self.assertEqual(loaded.source_vocab, self.model.source_vocab)
        self.assertEqual(list(loaded.params), list(self.model.params))
        for name, tensor in self.model.params.items():
            np.testing.assert_array_equal(loaded.params[name].data, tensor.data)

    def test_bytes_are_deterministic(self):
        """Equal models serialize to equal bytes"""
        self.assertEqual(to_bytes(self.model), to_bytes(tiny_model(self.model.spec.attention)))

    def test_manifest_layout(self):
        """The manifest lists contiguous little-endian blocks and the gate order"""
        payload = to_bytes(self.model)
        self.assertEqual(payload[:8], MAGIC)
        manifest, data_start = read_manifest(payload)
        self.assertEqual(manifest['gate_order'], ['input', 'forget', 'candidate', 'output'])
        offset = 0
        for entry in manifest['parameters']:
            self.assertEqual(entry['offset'], offset)
            self.assertEqual(entry['nbytes'], 8 * int(np.prod(entry['shape'])))
            offset += entry['nbytes']
        self.assertEqual(len(payload), data_start + offset)
        first = manifest['parameters'][0]
        value = struct.unpack('<d', payload[data_start:data_start + 8])[0]
        self.assertEqual(value, self.model.params[first['name']].data.flat[0])

    def test_single_precision_storage(self):
        """The 32-bit mode halves the data and loads back as float64"""
        loaded = from_bytes(to_bytes(self.model, dtype='<f4'))
        for name, tensor in self.model.params.items():
            self.assertEqual(loaded.params[name].data.dtype, np.float64)
            np.testing.assert_allclose(loaded.params[name].data, tensor.data, rtol=1e-6, atol=1e-7)

    def test_corrupt_files(self):
        """Bad magic, truncation and foreign gate orders are data errors"""
        payload = to_bytes(self.model)
        with self.assertRaises(DataError):
            from_bytes(b'NOTAMODEL' + payload[9:])
        with self.assertRaises(DataError):
            from_bytes(payload[:-5])
        manifest, data_start = read_manifest(payload)
        manifest['gate_order'] = ['forget', 'input', 'candidate', 'output']
        header = json.dumps(manifest).encode('utf-8')
        with self.assertRaises(DataError):
            from_bytes(MAGIC + struct.pack('<Q', len(header)) + header + payload[data_start:])
        with self.assertRaises(DataError):
            load_model(Path(self.tmp.name) / 'missing.nmt')

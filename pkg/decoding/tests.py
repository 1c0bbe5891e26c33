import numpy as np
from django.test import SimpleTestCase

from attention.config import AttentionConfig, Mechanism, Score
from core_math.exceptions import ConfigError, DataError
from corpus.pairs import Batch, encode_pair
from corpus.vocab import EOS_ID, Vocabulary
from decoding.alignment import (
    attribute_alignments, format_links, parse_links, restore_source_order, unk_replace,
)
from decoding.translate import DecodeRecord, force_decode, greedy_translate, greedy_translate_batch
from nmt.network import ModelSpec, NmtModel, decode_step, encode, initial_feed, sequence_loss


def small_model(attention=AttentionConfig(), seed=0, reverse_source=True):
    vocab = Vocabulary(['<unk>', '<eos>'] + [f"w{i}" for i in range(8)])
    spec = ModelSpec(layers=2, cells=6, src_vocab_size=len(vocab), tgt_vocab_size=len(vocab),
                     attention=attention, reverse_source=reverse_source)
    return NmtModel.initialize(spec, vocab, vocab, np.random.default_rng(seed), 0.5)


def records_from(rows, tokens):
    return [DecodeRecord(token_id=t, weights=np.asarray(r, dtype=float)) for r, t in zip(rows, tokens)]


class GreedyTestCase(SimpleTestCase):
    """Test cases for greedy translation"""

    def setUp(self):
        self.model = small_model()
        self.source = ['w0', 'w1', 'w2']

    def test_budget_of_one_word(self):
        """max_len=1 emits a single step and flags truncation unless it ends the sentence"""
        out = greedy_translate(self.model, self.source, max_len=1)
        self.assertEqual(len(out.records), 1)
        self.assertEqual(out.truncated, out.records[0].token_id != EOS_ID)

    def test_invalid_budget(self):
        """max_len below one is refused"""
        with self.assertRaises(ConfigError):
            greedy_translate(self.model, self.source, max_len=0)

    def test_deterministic(self):
        """Same model and input give the same output and weights"""
        a = greedy_translate(self.model, self.source, max_len=8)
        b = greedy_translate(self.model, self.source, max_len=8)
        self.assertEqual(a.tokens, b.tokens)
        for x, y in zip(a.records, b.records):
            np.testing.assert_array_equal(x.weights, y.weights)

    def test_weights_cover_source_and_terminator(self):
        """Each record has one weight per source word plus the terminator, summing to 1"""
        out = greedy_translate(self.model, self.source, max_len=5)
        for record in out.records:
            self.assertEqual(record.weights.shape, (4,))
            self.assertAlmostEqual(record.weights.sum(), 1.0, places=12)

    def test_batch_matches_single(self):
        """Translating in a padded batch gives the single-sentence tokens"""
        sentences = [['w0', 'w1', 'w2', 'w3'], ['w4'], ['w5', 'w6']]
        batched = greedy_translate_batch(self.model, sentences, max_len=6)
        for sentence, out in zip(sentences, batched):
            single = greedy_translate(self.model, sentence, max_len=6)
            self.assertEqual(out.tokens, single.tokens)
            np.testing.assert_allclose(out.records[0].weights, single.records[0].weights, atol=1e-12)

    def test_greedy_agrees_with_teacher_forcing(self):
        """Feeding the greedy output back as a reference reproduces its tokens and weights"""
        out = greedy_translate(self.model, self.source, max_len=6)
        ids = [r.token_id for r in out.records]
        pair = encode_pair(self.source, [], self.model.source_vocab, self.model.target_vocab, True)
        batch = Batch.from_pairs([pair])
        encoded = encode(self.model, batch.source, batch.source_mask)
        state, feed, prev = encoded.final, initial_feed(self.model, 1), [EOS_ID]
        for t, token in enumerate(ids):
            step = decode_step(self.model, state, prev, feed, encoded.memory, t)
            self.assertEqual(int(np.argmax(step.log_probs.data[0])), token)
            state, feed, prev = step.state, step.feed, [token]

        forced = type(pair)(pair.source_ids, tuple(ids if ids[-1] == EOS_ID else ids + [EOS_ID]), pair.source_tokens)
        result = sequence_loss(self.model, Batch.from_pairs([forced]))
        for step, record in zip(result.records, out.records):
            np.testing.assert_allclose(step.weights.data[0], record.weights, atol=1e-12)

    def test_without_attention(self):
        """A plain encoder-decoder translates with empty weight records"""
        out = greedy_translate(small_model(attention=None), self.source, max_len=4)
        self.assertTrue(all(r.weights is None for r in out.records))


class ForceDecodeTestCase(SimpleTestCase):
    """Test cases for force decoding"""

    def setUp(self):
        self.model = small_model(AttentionConfig(Mechanism.LOCAL_P, Score.GENERAL, window=1))

    def test_one_record_per_reference_token(self):
        """m words give m + 1 records, ending with the terminator"""
        records = force_decode(self.model, ['w0', 'w1', 'w2', 'w3'], ['w4', 'w5'])
        self.assertEqual(len(records), 3)
        self.assertEqual(records[-1].token_id, EOS_ID)
        self.assertTrue(all(r.position is not None for r in records))

    def test_matches_sequence_loss(self):
        """Weights equal those of the teacher-forced loss on the same pair"""
        pair = encode_pair(['w0', 'w1'], ['w2', 'w3', 'w4'], self.model.source_vocab, self.model.target_vocab, True)
        result = sequence_loss(self.model, Batch.from_pairs([pair]))
        records = force_decode(self.model, ['w0', 'w1'], ['w2', 'w3', 'w4'])
        for step, record in zip(result.records, records):
            np.testing.assert_array_equal(step.weights.data[0], record.weights)

    def test_local_p_support_is_bounded(self):
        """Local-p rows carry weight on at most 2D+1 positions"""
        records = force_decode(self.model, ['w0', 'w1', 'w2', 'w3', 'w4', 'w5'], ['w1', 'w2', 'w3'])
        for record in records:
            self.assertLessEqual(np.count_nonzero(record.weights), 3)

    def test_errors(self):
        """Empty references and non-attentional models are refused"""
        with self.assertRaises(DataError):
            force_decode(self.model, ['w0'], [])
        with self.assertRaises(ConfigError):
            force_decode(small_model(attention=None), ['w0'], ['w1'])


class AlignmentTestCase(SimpleTestCase):
    """Test cases for alignment attribution, unk replacement and Pharaoh I/O"""

    def test_restore_order_is_an_involution(self):
        """Un-reversing twice gives back the reversed columns; the terminator stays last"""
        weights = np.array([[0.1, 0.2, 0.3, 0.4]])
        once = restore_source_order(weights, True)
        np.testing.assert_array_equal(once, [[0.3, 0.2, 0.1, 0.4]])
        np.testing.assert_array_equal(restore_source_order(once, True), weights)

    def test_content_rows_shift_by_one(self):
        """Content scores credit row t to word t-1 and drop the first row"""
        rows = np.eye(4)[[3, 0, 1, 2]]  # rows for steps 0..3 (3 words + terminator)
        matrix = attribute_alignments(records_from(rows, [5, 6, 7, EOS_ID]), Score.DOT)
        self.assertEqual(matrix.weights.shape, (3, 4))
        np.testing.assert_array_equal(matrix.weights, rows[1:])
        self.assertEqual(matrix.links, ((0, 0), (1, 1), (2, 2)))

    def test_location_rows_unshifted(self):
        """Location scores credit row t to word t and drop the terminator row"""
        rows = np.eye(4)
        matrix = attribute_alignments(records_from(rows, [5, 6, 7, EOS_ID]), Score.LOCATION)
        np.testing.assert_array_equal(matrix.weights, rows[:3])
        self.assertEqual(matrix.links, ((0, 0), (1, 1), (2, 2)))

    def test_identity_diagonal_without_reversal(self):
        """Without reversal an identity pattern stays diagonal"""
        rows = np.vstack([np.eye(4)[3], np.eye(4)[:3]])
        matrix = attribute_alignments(records_from(rows, [5, 6, 7, EOS_ID]), Score.GENERAL, reversed_source=False)
        np.testing.assert_array_equal(matrix.weights[:, :3], np.eye(3))

    def test_reversal_moves_links(self):
        """With a reversed source, encoder position 0 is the last original word"""
        rows = np.vstack([np.eye(4)[3], np.eye(4)[:3]])
        matrix = attribute_alignments(records_from(rows, [5, 6, 7, EOS_ID]), Score.DOT, reversed_source=True)
        self.assertEqual(matrix.links, ((0, 2), (1, 1), (2, 0)))

    def test_values_preserved(self):
        """Attribution only re-indexes weights"""
        rng = np.random.default_rng(0)
        rows = rng.dirichlet(np.ones(5), size=4)
        matrix = attribute_alignments(records_from(rows, [5, 6, 7, EOS_ID]), Score.DOT, reversed_source=True)
        self.assertEqual(sorted(matrix.weights.ravel()), sorted(rows[1:].ravel()))

    def test_truncated_output_reuses_last_row(self):
        """Without a terminator record the last word keeps its own step's row"""
        rows = np.eye(3)
        matrix = attribute_alignments(records_from(rows, [5, 6]), Score.DOT)
        np.testing.assert_array_equal(matrix.weights, [rows[1], rows[1]])

    def test_terminator_column_never_linked(self):
        """Links only point at real source words"""
        rows = [[0.1, 0.0, 0.9], [0.2, 0.1, 0.7], [0.0, 0.3, 0.7]]
        matrix = attribute_alignments(records_from(rows, [5, 6, EOS_ID]), Score.DOT)
        self.assertEqual(matrix.links, ((0, 0), (1, 1)))

    def test_unk_replacement(self):
        """<unk> copies the aligned source word; other words are untouched"""
        rows = np.vstack([np.eye(4)[3], np.eye(4)[[2, 0, 1]]])
        matrix = attribute_alignments(records_from(rows, [5, 0, 7, EOS_ID]), Score.DOT)
        source = ['Mr', 'Kerr', 'said']
        self.assertEqual(unk_replace(['the', '<unk>', 'x'], matrix, source), ['the', 'Mr', 'x'])
        self.assertEqual(unk_replace(['a', 'b', 'c'], matrix, source), ['a', 'b', 'c'])
        self.assertEqual(unk_replace(['<unk>'] * 3, matrix, source), ['said', 'Mr', 'Kerr'])

    def test_pharaoh_round_trip(self):
        """t-s is sure, t?s is possible; output is sorted t-s pairs"""
        sure, possible = parse_links('0-1 2?0 1-1')
        self.assertEqual(sure, {(0, 1), (1, 1)})
        self.assertEqual(possible, {(2, 0)})
        self.assertEqual(format_links(sure), '0-1 1-1')
        with self.assertRaises(DataError):
            parse_links('0-x')

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core_math.exceptions import ConfigError, DataError
from corpus.pairs import Batch, encode_pair, filter_pairs, load_pairs, make_batches
from corpus.toy import gold_links, reverse_copy_pairs, write_toy_corpus
from corpus.vocab import (
    EOS_ID, UNK_ID, Vocabulary, build_vocab, read_lines, read_sentences, vocab_from_sentences,
)


class VocabularyTestCase(SimpleTestCase):
    """Test cases for vocabulary building and lookup"""

    def setUp(self):
        self.sentences = [['the', 'cat', 'sat'], ['the', 'dog'], ['the', 'cat']]

    def test_reserved_ids(self):
        """<unk> is 0 and <eos> is 1"""
        vocab = vocab_from_sentences(self.sentences, 10)
        self.assertEqual(vocab.token(UNK_ID), '<unk>')
        self.assertEqual(vocab.token(EOS_ID), '<eos>')

    def test_frequency_order(self):
        """Most frequent tokens get the smallest ids after the reserved ones"""
        vocab = vocab_from_sentences(self.sentences, 10)
        self.assertEqual(vocab.tokens[2:4], ('the', 'cat'))

    def test_truncation_maps_rare_words_to_unk(self):
        """Words beyond max_size look up as <unk>"""
        vocab = vocab_from_sentences(self.sentences, 3)
        self.assertEqual(len(vocab), 3)
        self.assertEqual(vocab.lookup('dog'), UNK_ID)
        self.assertEqual(vocab.encode(['the', 'zebra']), [2, UNK_ID])

    def test_too_small_vocabulary_is_rejected(self):
        """A vocabulary needs room for one real word"""
        with self.assertRaises(ConfigError):
            vocab_from_sentences(self.sentences, 2)

    def test_save_and_load(self):
        """A saved vocabulary loads back equal"""
        vocab = vocab_from_sentences(self.sentences, 10)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'v.txt'
            vocab.save(path)
            self.assertEqual(Vocabulary.load(path), vocab)

    def test_missing_corpus(self):
        """Unreadable corpora raise DataError"""
        with self.assertRaises(DataError):
            build_vocab('/nonexistent/corpus.txt', 10)


class LineReadingTestCase(SimpleTestCase):
    """Test cases for line splitting of text inputs"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, name, text):
        path = self.dir / name
        path.write_bytes(text.encode('utf-8'))
        return path

    def test_unicode_separators_stay_inside_a_sentence(self):
        """U+2028 does not start a new sentence"""
        path = self.write('c.txt', 'der Hund\u2028bellt\nzweiter Satz\n')
        sentences = read_sentences(path)
        self.assertEqual(len(sentences), 2)
        self.assertEqual(sentences[1], ['zweiter', 'Satz'])

    def test_line_endings(self):
        """CRLF ends a line and blank lines are kept; U+0085 and form feeds do not split"""
        self.assertEqual(read_lines(self.write('a', 'a\r\n\nb')), ['a', '', 'b'])
        self.assertEqual(read_lines(self.write('b', 'x\x85y\x0cz\n')), ['x\x85y\x0cz'])
        self.assertEqual(read_lines(self.write('c', '')), [])

    def test_pairs_line_up_with_separators_present(self):
        """A source line holding U+2028 still pairs with its target line"""
        vocab = Vocabulary(['<unk>', '<eos>', 'a', 'b'])
        src = self.write('s', 'a\u2028b\nb\n')
        tgt = self.write('t', 'b a\na\n')
        self.assertEqual(len(load_pairs(src, tgt, vocab, vocab)), 2)

    def test_vocabulary_tokens_with_separators(self):
        """Vocabulary files split on newline only"""
        vocab = Vocabulary(['<unk>', '<eos>', 'x\u2028y', 'z'])
        vocab.save(self.dir / 'v.txt')
        self.assertEqual(Vocabulary.load(self.dir / 'v.txt'), vocab)


class PairTestCase(SimpleTestCase):
    """Test cases for pair encoding, filtering and batching"""

    def setUp(self):
        self.vocab = vocab_from_sentences([['a', 'b', 'c', 'd']], 10)

    def test_terminator_and_reversal(self):
        """Both sides end with <eos>; only source words are reversed"""
        pair = encode_pair(['a', 'b', 'c'], ['c', 'd'], self.vocab, self.vocab, reverse_source=True)
        a, b, c, d = (self.vocab.lookup(t) for t in 'abcd')
        self.assertEqual(pair.source_ids, (c, b, a, EOS_ID))
        self.assertEqual(pair.target_ids, (c, d, EOS_ID))
        self.assertEqual(pair.source_length, 3)
        self.assertEqual(pair.target_length, 2)

    def test_length_filter_checks_both_sides(self):
        """Pairs longer than max_len on either side are dropped"""
        pairs = [
            encode_pair(['a'] * 3, ['b'] * 3, self.vocab, self.vocab),
            encode_pair(['a'] * 6, ['b'] * 2, self.vocab, self.vocab),
            encode_pair(['a'] * 2, ['b'] * 6, self.vocab, self.vocab),
        ]
        self.assertEqual(len(filter_pairs(pairs, 5)), 1)

    def test_batch_padding_and_masks(self):
        """Rows are right-padded with <eos> and masked"""
        pairs = [
            encode_pair(['a', 'b'], ['c'], self.vocab, self.vocab),
            encode_pair(['a'], ['c', 'd', 'a'], self.vocab, self.vocab),
        ]
        batch = Batch.from_pairs(pairs)
        self.assertEqual(batch.source.shape, (2, 3))
        self.assertEqual(batch.target.shape, (2, 4))
        np.testing.assert_array_equal(batch.source_mask[1], [True, True, False])
        self.assertEqual(batch.token_count, 2 + 4)
        np.testing.assert_array_equal(batch.source_lengths, [3, 2])

    def test_make_batches_is_seeded(self):
        """Same seed, same batches"""
        pairs = [encode_pair(['a'] * (i % 4 + 1), ['b'], self.vocab, self.vocab) for i in range(10)]
        first = make_batches(pairs, 3, rng=np.random.default_rng(5))
        second = make_batches(pairs, 3, rng=np.random.default_rng(5))
        self.assertEqual([b.size for b in first], [3, 3, 3, 1])
        for x, y in zip(first, second):
            np.testing.assert_array_equal(x.source, y.source)

    def test_bad_batch_size(self):
        """A batch size below one is a configuration error"""
        with self.assertRaises(ConfigError):
            make_batches([], 0)

    def test_mismatched_files(self):
        """Source and target files must have the same number of lines"""
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, 's').write_text('a b\nc\n', encoding='utf-8')
            Path(tmp, 't').write_text('a\n', encoding='utf-8')
            with self.assertRaises(DataError):
                load_pairs(Path(tmp, 's'), Path(tmp, 't'), self.vocab, self.vocab)


class ToyCorpusTestCase(SimpleTestCase):
    """Test cases for the reverse-copy corpus"""

    def test_target_is_reversed_source(self):
        """Every target reads its source backwards within the length range"""
        for source, target in reverse_copy_pairs(50, np.random.default_rng(0)):
            self.assertEqual(target, source[::-1])
            self.assertTrue(5 <= len(source) <= 15)

    def test_gold_links(self):
        """Target word t aligns to source word n-1-t"""
        self.assertEqual(gold_links(3), [(0, 2), (1, 1), (2, 0)])

    def test_written_files(self):
        """All five files are written with matching line counts"""
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_toy_corpus(tmp, 20, 7, np.random.default_rng(1))
            self.assertEqual(set(paths), {'train_src', 'train_tgt', 'test_src', 'test_tgt', 'test_align'})
            for name in ('test_src', 'test_tgt', 'test_align'):
                self.assertEqual(len(paths[name].read_text(encoding='utf-8').splitlines()), 7)

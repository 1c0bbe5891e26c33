import math
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core_math.exceptions import ConfigError, DataError
from evaluation.accuracy import token_accuracy
from evaluation.aer import GoldAlignment, aer
from evaluation.bleu import bleu, ngrams
from evaluation.buckets import bucket_table, length_buckets


def split(lines):
    return [line.split() for line in lines]


class BleuTestCase(SimpleTestCase):
    """Test cases for corpus BLEU"""

    def test_short_candidate(self):
        """Perfect precisions on a one-word-short candidate leave only the brevity penalty"""
        report = bleu([['a', 'b', 'c', 'd']], [['a', 'b', 'c', 'd', 'e']])
        self.assertEqual(report.precisions, (1.0, 1.0, 1.0, 1.0))
        self.assertAlmostEqual(report.brevity_penalty, math.exp(-0.25), places=12)
        self.assertAlmostEqual(report.score, 77.88, delta=0.01)

    def test_identity_is_one_hundred(self):
        """A corpus scored against itself is exactly 100"""
        corpus = split(['the cat sat on the mat', 'a b c d', 'one two three four five'])
        self.assertEqual(bleu(corpus, corpus).score, 100.0)

    def test_no_overlap(self):
        """No shared words score 0"""
        self.assertEqual(bleu(split(['a b c d']), split(['w x y z'])).score, 0.0)

    def test_clipping(self):
        """Repeated candidate words only match as often as the reference has them"""
        report = bleu(split(['the the the the']), split(['the cat']))
        self.assertEqual(report.matches[0], 1)
        self.assertEqual(report.totals[0], 4)

    def test_order_invariant(self):
        """Corpus BLEU does not depend on sentence order"""
        hyps = split(['the cat sat on a mat', 'a dog ran far away', 'it rained all day long'])
        refs = split(['the cat sat on the mat', 'the dog ran far away', 'it rained all day'])
        forward = bleu(hyps, refs).score
        self.assertEqual(bleu(hyps[::-1], refs[::-1]).score, forward)
        self.assertGreater(forward, 0.0)

    def test_case_sensitive(self):
        """Matching is exact, case included"""
        self.assertEqual(bleu(split(['The cat sat down']), split(['the cat sat down'])).matches[0], 3)

    def test_errors(self):
        """Empty or mismatched corpora are data errors"""
        with self.assertRaises(DataError):
            bleu([], [])
        with self.assertRaises(DataError):
            bleu(split(['a']), split(['a', 'b']))

    def test_report_line(self):
        """The summary line carries the score and lengths"""
        text = str(bleu(split(['a b c d']), split(['a b c d e'])))
        self.assertTrue(text.startswith('BLEU = 77.88'))
        self.assertIn('hyp_len=4, ref_len=5', text)

    def test_ngrams(self):
        """n-grams are counted over contiguous windows"""
        self.assertEqual(ngrams(['a', 'b', 'a', 'b'], 2)[('a', 'b')], 2)
        self.assertEqual(len(ngrams(['a'], 2)), 0)


class AerTestCase(SimpleTestCase):
    """Test cases for the alignment error rate"""

    def test_hand_example(self):
        """|A|=4, |S|=5, |A & S|=3 gives 1/3"""
        predicted = [{(0, 0), (1, 1), (2, 2), (3, 0)}]
        sure = [{(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)}]
        self.assertAlmostEqual(aer(predicted, sure), 1 / 3, places=15)

    def test_extremes(self):
        """A = S is 0; disjoint sets are 1"""
        links = [{(0, 0), (1, 1)}]
        self.assertEqual(aer(links, links), 0.0)
        self.assertEqual(aer([{(0, 1)}], [{(0, 0)}]), 1.0)

    def test_possible_links_count_for_precision(self):
        """A link in P but not S still earns precision credit"""
        self.assertAlmostEqual(aer([{(0, 0), (1, 0)}], [{(0, 0)}], [{(1, 0)}]), 1 - 3 / 3, places=15)
        self.assertAlmostEqual(aer([{(0, 0), (1, 0)}], [{(0, 0)}]), 1 - 2 / 3, places=15)

    def test_adding_correct_links_never_hurts(self):
        """AER is non-increasing as sure links join A"""
        sure = [{(t, t) for t in range(6)}]
        predicted = {(0, 3), (1, 4)}
        previous = aer([predicted], sure)
        for t in range(6):
            predicted = predicted | {(t, t)}
            current = aer([predicted], sure)
            self.assertLessEqual(current, previous)
            self.assertTrue(0.0 <= current <= 1.0)
            previous = current

    def test_errors(self):
        """Mismatched corpora and two empty sets are data errors"""
        with self.assertRaises(DataError):
            aer([set()], [set(), set()])
        with self.assertRaises(DataError):
            aer([set()], [set()])

    def test_gold_file(self):
        """Gold files parse sure and possible links per line and check bounds"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'gold.align'
            path.write_text('0-0 1-1 2?1\n0-1\n', encoding='utf-8')
            gold = GoldAlignment.load(path)
        self.assertEqual(len(gold), 2)
        self.assertEqual(gold.possible[0], {(2, 1)})
        gold.check_bounds([3, 1], [2, 2])
        with self.assertRaises(DataError):
            gold.check_bounds([2, 1], [2, 2])
        with self.assertRaises(DataError):
            GoldAlignment.load(Path(tmp) / 'missing.align')

    def test_gold_file_splits_on_newline_only(self):
        """A U+2028 inside a line does not add a sentence"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'gold.align'
            path.write_bytes('0-0\u20281-1\n0-1\n'.encode('utf-8'))
            gold = GoldAlignment.load(path)
        self.assertEqual(len(gold), 2)
        self.assertEqual(gold.sure[0], {(0, 0), (1, 1)})
        self.assertEqual(gold.sure[1], {(0, 1)})

    def test_bounds_need_matching_sentence_counts(self):
        """Gold files for a different number of sentences are data errors"""
        gold = GoldAlignment.from_lines(['0-0', '0-0'])
        gold.check_bounds([1, 1], [1, 1])
        with self.assertRaises(DataError):
            gold.check_bounds([1], [1])
        with self.assertRaises(DataError):
            gold.check_bounds([1, 1, 1], [1, 1, 1])


class BucketTestCase(SimpleTestCase):
    """Test cases for BLEU per source length"""

    def setUp(self):
        self.sources = split(['a b', 'a b c d e', 'a b c d e f g h i j k', 'x y z'])
        self.refs = split(['the cat sat down', 'a dog ran far away', 'it rained all day', 'one two three four'])
        self.hyps = split(['the cat sat down', 'a dog ran far', 'it rained all night', 'one two three four'])

    def test_single_bucket_is_corpus_bleu(self):
        """One open-ended bucket scores the whole corpus"""
        (bucket,) = length_buckets(self.sources, self.refs, self.hyps, [0])
        self.assertEqual(bucket.sentences, 4)
        self.assertEqual(bucket.report.score, bleu(self.hyps, self.refs).score)
        self.assertEqual(bucket.label, '[0,inf)')

    def test_grouping_and_absent_buckets(self):
        """Sentences land in [low, high) groups; empty groups are absent"""
        buckets = length_buckets(self.sources, self.refs, self.hyps, [0, 4, 10, 20])
        self.assertEqual([b.sentences for b in buckets], [2, 1, 1, 0])
        self.assertFalse(buckets[-1].present)
        self.assertEqual(buckets[0].report.score, 100.0)
        table = bucket_table(buckets).splitlines()
        self.assertEqual(table[0], 'bucket\tsentences\tbleu')
        self.assertEqual(table[-1], '[20,inf)\t0\t-')

    def test_bad_edges(self):
        """Edges must be strictly increasing"""
        with self.assertRaises(ConfigError):
            length_buckets(self.sources, self.refs, self.hyps, [10, 10])
        with self.assertRaises(ConfigError):
            length_buckets(self.sources, self.refs, self.hyps, [])

    def test_mismatched_inputs(self):
        """All three corpora must have the same length"""
        with self.assertRaises(DataError):
            length_buckets(self.sources, self.refs[:2], self.hyps, [0])


class TokenAccuracyTestCase(SimpleTestCase):
    """Test cases for position-wise token accuracy"""

    def test_counts_reference_positions(self):
        """Hits are counted per reference position; extra output words do not help"""
        self.assertEqual(token_accuracy(split(['a b c d']), split(['a x c'])), 2 / 3)
        self.assertEqual(token_accuracy(split(['a']), split(['a b'])), 0.5)

    def test_errors(self):
        """Mismatched or empty references are data errors"""
        with self.assertRaises(DataError):
            token_accuracy(split(['a']), [])
        with self.assertRaises(DataError):
            token_accuracy([[]], [[]])

import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings
from PIL import Image

from cli.base import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, NmtCommand
from cli.heatmap import gray_levels, plot_attn
from cli.management.commands.plot_attn import read_matrices
from cli.run_config import read_config_file, resolve
from cli.runner import run
from core_math.exceptions import ConfigError, DataError, NumericalError, ShapeError
from decoding.alignment import AlignmentMatrix


def quiet_run(argv):
    err = io.StringIO()
    with redirect_stdout(io.StringIO()), redirect_stderr(err):
        code = run(argv)
    return code, err.getvalue()


class RunnerTestCase(SimpleTestCase):
    """Test cases for subcommand dispatch and exit codes"""

    def test_missing_subcommand(self):
        """No subcommand prints usage and exits 1"""
        code, err = quiet_run(['manage.py'])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('usage:', err)

    def test_unknown_flag(self):
        """Argument errors exit 1"""
        code, err = quiet_run(['manage.py', 'score-bleu', 'a', 'b', '--bogus'])
        self.assertEqual(code, EXIT_USAGE)
        self.assertTrue(err.startswith('error:'))

    def test_unknown_subcommand(self):
        """A misspelt subcommand exits 1 with an error line instead of raising"""
        code, err = quiet_run(['manage.py', 'trian'])
        self.assertEqual(code, EXIT_USAGE)
        self.assertTrue(err.startswith("error: unknown subcommand 'trian'"))
        self.assertIn('usage:', err)

    def test_missing_file(self):
        """Unreadable inputs exit 2"""
        with tempfile.TemporaryDirectory() as tmp:
            missing = str(Path(tmp) / 'missing.txt')
            code, err = quiet_run(['manage.py', 'score-bleu', missing, missing])
        self.assertEqual(code, EXIT_DATA)
        self.assertIn('missing.txt', err)

    def test_contradictory_configuration(self):
        """local-p with the location score is refused before any work"""
        with tempfile.TemporaryDirectory() as tmp:
            code, err = quiet_run([
                'manage.py', 'train', '--train-src', 'x', '--train-tgt', 'y', '--output-dir', tmp,
                '--attention', 'local-p', '--score', 'location',
            ])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('content score', err)

    def test_numerical_failure(self):
        """Non-finite values map to exit code 3"""

        class Failing(NmtCommand):
            def handle(self, *args, **options):
                raise NumericalError('loss is nan', epoch=1, batch_index=4)

        with self.assertRaises(CommandError) as ctx:
            call_command(Failing(), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_NUMERIC)


class RunConfigTestCase(SimpleTestCase):
    """Test cases for configuration layering"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, text):
        path = self.dir / 'run.cfg'
        path.write_text(text, encoding='utf-8')
        return path

    def test_file_values_are_typed(self):
        """Values are cast to the field types"""
        values = read_config_file(self.write('cells=16\nlr=0.5\ninput_feeding=False\nscore=general\n'))
        self.assertEqual(values, {'cells': 16, 'lr': 0.5, 'input_feeding': False, 'score': 'general'})

    def test_flags_win_over_file(self):
        """Defaults, then the file, then flags"""
        path = self.write('cells=16\nlayers=3\nattention=local-p\nscore=general\n')
        config = resolve('train', path, {'cells': 32})
        self.assertEqual(config.cells, 32)
        self.assertEqual(config.layers, 3)
        self.assertEqual(config.attention, 'local_p')
        self.assertEqual(config.batch_size, 32)

    def test_bad_files(self):
        """Unknown keys and bad values are configuration errors; a missing file is a data error"""
        with self.assertRaises(ConfigError):
            read_config_file(self.write('colour=blue\n'))
        with self.assertRaises(ConfigError):
            read_config_file(self.write('cells=many\n'))
        with self.assertRaises(DataError):
            read_config_file(self.dir / 'absent.cfg')

    def test_dropout_lengthens_schedule(self):
        """Dropout switches to 12 epochs halving after 8 unless set explicitly"""
        config = resolve('train', overrides={'dropout': 0.2})
        self.assertEqual((config.epochs, config.halve_after), (12, 8))
        config = resolve('train', overrides={'dropout': 0.2, 'epochs': 20})
        self.assertEqual((config.epochs, config.halve_after), (20, 8))

    def test_validation(self):
        """Out-of-range values are refused"""
        with self.assertRaises(ConfigError):
            resolve('train', overrides={'cells': 0})
        with self.assertRaises(ConfigError):
            resolve('train', overrides={'halve_after': 10})

    def test_loss_normalization(self):
        """Token normalization is the default at this scale; only sentence and token are accepted"""
        self.assertEqual(resolve('train').loss_normalization, 'token')
        self.assertEqual(resolve('train').trainer_config().loss_normalization, 'token')
        config = resolve('train', overrides={'loss_normalization': 'sentence'})
        self.assertEqual(config.trainer_config().loss_normalization, 'sentence')
        with self.assertRaises(ConfigError):
            resolve('train', overrides={'loss_normalization': 'batch'})

    def test_echo(self):
        """The resolved values are written back out as key=value lines"""
        config = resolve('train', overrides={'cells': 8}, paths={'train_src': 'a.txt'})
        text = config.echo_to(self.dir / 'run').read_text(encoding='utf-8')
        self.assertIn('# subcommand=train', text)
        self.assertIn('# train_src=a.txt', text)
        self.assertIn('cells=8\n', text)


class HeatmapTestCase(SimpleTestCase):
    """Test cases for attention heatmaps"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / 'sent.pgm'

    def test_identity_is_a_white_diagonal(self):
        """One-hot rows draw white cells on black"""
        matrix = AlignmentMatrix(weights=np.hstack([np.eye(3), np.zeros((3, 1))]), links=())
        plot_attn(matrix, ['a', 'b', 'c'], ['x', 'y', 'z'], self.path, cell=2)
        with Image.open(self.path) as image:
            self.assertEqual(image.mode, 'L')
            self.assertEqual(image.size, (8, 6))
            pixels = np.asarray(image)
        self.assertEqual(pixels[0, 0], 255)
        self.assertEqual(pixels[3, 3], 255)
        self.assertEqual(pixels[0, 2], 0)
        self.assertEqual(pixels[:, 6:].max(), 0)

    def test_uniform_rows_are_even_gray(self):
        """Uniform weights give one gray level"""
        matrix = AlignmentMatrix(weights=np.full((2, 4), 0.25), links=())
        plot_attn(matrix, ['a', 'b', 'c'], ['x', 'y'], self.path, cell=1)
        with Image.open(self.path) as image:
            pixels = np.asarray(image)
        np.testing.assert_array_equal(pixels, 64)
        self.assertEqual(gray_levels([0.5])[0], 128)

    def test_legend_and_svg(self):
        """Labels go to the legend and, escaped, to the SVG"""
        matrix = AlignmentMatrix(weights=np.full((1, 2), 0.5), links=())
        written = plot_attn(matrix, ['Haus'], ['house'], self.path, svg=True)
        self.assertEqual(len(written), 3)
        legend = written[1].read_text(encoding='utf-8')
        self.assertIn('0\tHaus', legend)
        self.assertIn('1\t<eos>', legend)
        svg = written[2].read_text(encoding='utf-8')
        self.assertTrue(svg.startswith('<svg'))
        self.assertIn('&lt;eos&gt;', svg)
        self.assertIn('rgb(128,128,128)', svg)

    def test_weights_file_splits_on_newline_only(self):
        """A U+2028 inside a record's words does not break the record"""
        record = {'source': ['a\u2028b'], 'target': ['x'], 'weights': [[0.5, 0.5]]}
        path = Path(self.tmp.name) / 'weights.jsonl'
        path.write_bytes((json.dumps(record, ensure_ascii=False) + '\n').encode('utf-8'))
        (source, target, matrix), = list(read_matrices(path))
        self.assertEqual(source, ['a\u2028b'])
        self.assertEqual(matrix.weights.shape, (1, 2))

    def test_dimension_mismatch(self):
        """The matrix must be target words by source words plus the terminator"""
        matrix = AlignmentMatrix(weights=np.eye(3), links=())
        with self.assertRaises(ShapeError):
            plot_attn(matrix, ['a', 'b', 'c'], ['x', 'y', 'z'], self.path)


class PipelineTestCase(SimpleTestCase):
    """End-to-end run of the toolkit commands on a tiny reverse-copy corpus"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.data = cls.root / 'data'
        cls.run_dir = cls.root / 'run'
        cls.call('make_toy_corpus', '--output-dir', str(cls.data), '--train-size', '30', '--test-size', '4',
                 '--symbols', '5', '--min-len', '2', '--max-len', '4', '--seed', '7')
        cls.call('train', '--train-src', str(cls.data / 'train.src'), '--train-tgt', str(cls.data / 'train.tgt'),
                 '--eval-src', str(cls.data / 'test.src'), '--eval-tgt', str(cls.data / 'test.tgt'),
                 '--output-dir', str(cls.run_dir), '--layers', '1', '--cells', '6', '--epochs', '2',
                 '--halve-after', '1', '--batch-size', '8', '--vocab-size', '20',
                 '--attention', 'local-p', '--score', 'general', '--window', '1')

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    @staticmethod
    def call(*args):
        out = io.StringIO()
        call_command(*args, stdout=out, stderr=io.StringIO())
        return out.getvalue()

    def test_training_outputs(self):
        """Checkpoints, the learning curve and the resolved configuration are written"""
        for name in ('epoch1.nmt', 'epoch2.nmt', 'latest.nmt', 'train_log.tsv', 'run_config.txt',
                     'src.vocab', 'tgt.vocab'):
            self.assertTrue((self.run_dir / name).is_file(), name)
        log = (self.run_dir / 'train_log.tsv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(log), 3)
        self.assertIn('attention=local_p', (self.run_dir / 'run_config.txt').read_text(encoding='utf-8'))

    def test_translate_and_score(self):
        """Translations keep input order and can be scored"""
        hyp = self.root / 'out' / 'hyp.txt'
        out = self.call('translate', str(self.run_dir / 'latest.nmt'), str(self.data / 'test.src'),
                        '--output', str(hyp), '--max-len', '6', '--batch-size', '1', '--workers', '2',
                        '--replace-unk', '--show-alignments')
        self.assertIn('Successfully translated 4 sentences', out)
        self.assertEqual(len(hyp.read_text(encoding='utf-8').splitlines()), 4)
        self.assertEqual(len(Path(f'{hyp}.align').read_text(encoding='utf-8').splitlines()), 4)
        report = self.call('score_bleu', str(hyp), str(self.data / 'test.tgt'))
        self.assertTrue(report.startswith('BLEU = '))

    def test_force_align_plot_and_aer(self):
        """Forced alignments cover every reference word and feed the heatmaps and AER"""
        align = self.root / 'forced' / 'test.align'
        weights = self.root / 'forced' / 'weights.jsonl'
        self.call('force_align', str(self.run_dir / 'latest.nmt'), '--src', str(self.data / 'test.src'),
                  '--tgt', str(self.data / 'test.tgt'), '--output', str(align), '--weights', str(weights))
        references = (self.data / 'test.tgt').read_text(encoding='utf-8').splitlines()
        for line, reference in zip(align.read_text(encoding='utf-8').splitlines(), references):
            self.assertEqual(len(line.split()), len(reference.split()))
        first = json.loads(weights.read_text(encoding='utf-8').splitlines()[0])
        self.assertEqual(len(first['weights']), len(first['target']))
        self.assertEqual(len(first['weights'][0]), len(first['source']) + 1)

        plots = self.root / 'plots'
        self.call('plot_attn', str(weights), '--output-dir', str(plots), '--cell', '3', '--svg')
        for index in range(4):
            self.assertTrue((plots / f'sent{index:04d}.pgm').is_file())
            self.assertTrue((plots / f'sent{index:04d}.svg').is_file())
        with Image.open(plots / 'sent0000.pgm') as image:
            self.assertEqual(image.size, (3 * (len(first['source']) + 1), 3 * len(first['target'])))

        report = self.call('score_aer', str(align), str(self.data / 'test.align'))
        self.assertTrue(report.startswith('AER = '))
        self.assertIn('(4 sentences)', report)

        checked = self.call('score_aer', str(align), str(self.data / 'test.align'),
                            '--src', str(self.data / 'test.src'), '--tgt', str(self.data / 'test.tgt'))
        self.assertEqual(checked, report)

    def test_score_aer_checks_gold_against_the_corpus(self):
        """Gold links outside the sentence pair are a data error"""
        gold = self.root / 'bad.align'
        gold.write_text('0-9\n' * 4, encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.call('score_aer', str(self.data / 'test.align'), str(gold),
                      '--src', str(self.data / 'test.src'), '--tgt', str(self.data / 'test.tgt'))
        self.assertEqual(ctx.exception.returncode, EXIT_DATA)

    def test_length_report_echoes_configuration(self):
        """The bucket table written with --output gets its resolved configuration alongside"""
        table = self.root / 'report' / 'buckets.tsv'
        self.call('length_report', '--src', str(self.data / 'test.src'), '--ref', str(self.data / 'test.tgt'),
                  '--hyp', str(self.data / 'test.tgt'), '--edges', '0,3', '--output', str(table))
        self.assertTrue(table.read_text(encoding='utf-8').startswith('bucket\t'))
        echoed = Path(f'{table}.run_config.txt').read_text(encoding='utf-8')
        self.assertIn('# subcommand=length-report', echoed)
        self.assertIn('# edges=0,3', echoed)

    def test_default_output_directory(self):
        """Without --output-dir training writes under NMT_OUTPUT_DIR/train"""
        root = self.root / 'default-runs'
        with override_settings(NMT_OUTPUT_DIR=root):
            self.call('train', '--train-src', str(self.data / 'train.src'),
                      '--train-tgt', str(self.data / 'train.tgt'),
                      '--layers', '1', '--cells', '4', '--epochs', '2', '--halve-after', '1',
                      '--batch-size', '8', '--vocab-size', '20')
        self.assertTrue((root / 'train' / 'latest.nmt').is_file())
        echoed = (root / 'train' / 'run_config.txt').read_text(encoding='utf-8')
        self.assertIn(f'# output_dir={root / "train"}', echoed)

from pathlib import Path

from cli.base import NmtCommand, add_model_arguments, model_overrides
from training.experiment import DEFAULT_VARIANTS, Variant, compare_table, compare_variants


class Command(NmtCommand):
    help = 'Trains several attention variants on one corpus and tabulates perplexity, BLEU and AER'

    def add_arguments(self, parser):
        parser.add_argument('--train-src', required=True)
        parser.add_argument('--train-tgt', required=True)
        parser.add_argument('--test-src', required=True)
        parser.add_argument('--test-tgt', required=True)
        parser.add_argument('--gold-align', help='Pharaoh gold alignments of the test set')
        parser.add_argument('--src-vocab')
        parser.add_argument('--tgt-vocab')
        parser.add_argument('--output-dir', help='Defaults to NMT_OUTPUT_DIR/compare')
        parser.add_argument(
            '--variants', default=None,
            help='Comma-separated list such as none,global:dot,local-p:general,global:dot:nofeed',
        )
        parser.add_argument('--decode-max-len', type=int, default=None)
        add_model_arguments(parser)

    def handle(self, *args, **options):
        self.output_dir(options, 'compare')
        overrides = dict(model_overrides(options), decode_max_len=options['decode_max_len'])
        config = self.resolve_config('compare', options, overrides)
        config.echo_to(options['output_dir'])
        variants = DEFAULT_VARIANTS
        if options['variants']:
            variants = [Variant.parse(v) for v in options['variants'].split(',') if v.strip()]
        paths = {
            key: options[key]
            for key in ('train_src', 'train_tgt', 'test_src', 'test_tgt', 'gold_align', 'src_vocab', 'tgt_vocab')
        }
        self.stdout.write(f'Comparing {len(variants)} variants...')
        rows = compare_variants(config, paths, options['output_dir'], variants)
        table = compare_table(rows)
        Path(options['output_dir'], 'compare.tsv').write_text(table, encoding='utf-8')
        self.stdout.write(table)
        self.stdout.write(self.style.SUCCESS('Successfully compared variants'))

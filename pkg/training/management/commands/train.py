from cli.base import NmtCommand, add_model_arguments, model_overrides
from training.experiment import train_from_files

PATH_OPTIONS = ('train_src', 'train_tgt', 'eval_src', 'eval_tgt', 'src_vocab', 'tgt_vocab')


class Command(NmtCommand):
    help = 'Trains an encoder-decoder model and writes one checkpoint per epoch'

    def add_arguments(self, parser):
        parser.add_argument('--train-src', required=True)
        parser.add_argument('--train-tgt', required=True)
        parser.add_argument('--eval-src', help='Held-out source sentences for per-epoch perplexity')
        parser.add_argument('--eval-tgt')
        parser.add_argument('--src-vocab', help='Vocabulary file; built from --train-src when omitted')
        parser.add_argument('--tgt-vocab')
        parser.add_argument('--output-dir', help='Defaults to NMT_OUTPUT_DIR/train')
        add_model_arguments(parser)

    def handle(self, *args, **options):
        self.output_dir(options, 'train')
        config = self.resolve_config('train', options, model_overrides(options))
        config.echo_to(options['output_dir'])
        self.stdout.write(f'Training for {config.epochs} epochs...')

        def report(record):
            self.stdout.write(
                f'  - epoch {record.epoch}: loss {record.loss:.4f}, ppl {record.ppl:.3f}, lr {record.lr:g}'
            )

        paths = {key: options[key] for key in PATH_OPTIONS}
        _, log = train_from_files(config, paths, options['output_dir'], on_epoch=report)
        self.stdout.write(self.style.SUCCESS(
            f'Successfully trained {len(log)} epochs; model in {options["output_dir"]}/latest.nmt'
        ))

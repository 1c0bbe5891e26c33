import numpy as np

from cli.base import NmtCommand
from corpus.toy import write_toy_corpus


class Command(NmtCommand):
    help = 'Writes a synthetic reverse-copy parallel corpus with gold alignments'

    def add_arguments(self, parser):
        parser.add_argument('--output-dir', required=True)
        parser.add_argument('--train-size', type=int, default=10000, help='Number of training pairs')
        parser.add_argument('--test-size', type=int, default=1000, help='Number of held-out pairs')
        parser.add_argument('--symbols', type=int, default=20)
        parser.add_argument('--min-len', type=int, default=5)
        parser.add_argument('--max-len', type=int, default=15)
        parser.add_argument('--seed', type=int, default=None)

    def handle(self, *args, **options):
        config = self.resolve_config('make-toy-corpus', options, {'seed': options['seed']})
        rng = np.random.default_rng(config.seed)
        self.stdout.write(f'Generating {options["train_size"]} + {options["test_size"]} pairs...')
        paths = write_toy_corpus(
            options['output_dir'],
            options['train_size'],
            options['test_size'],
            rng,
            symbols=options['symbols'],
            min_len=options['min_len'],
            max_len=options['max_len'],
        )
        config.echo_to(options['output_dir'])
        for name, path in paths.items():
            self.stdout.write(f'  - {name}: {path}')
        self.stdout.write(self.style.SUCCESS('Successfully wrote toy corpus'))

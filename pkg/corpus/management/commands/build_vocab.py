from cli.base import NmtCommand
from corpus.vocab import build_vocab


class Command(NmtCommand):
    help = 'Builds a frequency-ranked vocabulary file from a tokenized corpus'

    def add_arguments(self, parser):
        parser.add_argument('corpus', help='Tokenized corpus, one sentence per line')
        parser.add_argument('--size', type=int, default=None, help='Vocabulary size including <unk> and <eos>')
        parser.add_argument('--output', required=True, help='Vocabulary file to write')
        parser.add_argument('--config', default=None, help='key=value run configuration file')

    def handle(self, *args, **options):
        config = self.resolve_config('build-vocab', options, {'vocab_size': options['size']})
        vocab = build_vocab(options['corpus'], config.vocab_size)
        vocab.save(options['output'])
        config.echo_next_to(options['output'])
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(vocab)} tokens to {options["output"]}'))

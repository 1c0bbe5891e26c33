from pathlib import Path

from cli.base import NmtCommand
from core_math.exceptions import ConfigError
from corpus.vocab import read_sentences
from evaluation.buckets import bucket_table, length_buckets


class Command(NmtCommand):
    help = 'BLEU per source-length bucket'

    def add_arguments(self, parser):
        parser.add_argument('--src', required=True, help='Source sentences of the test set')
        parser.add_argument('--ref', required=True)
        parser.add_argument('--hyp', required=True)
        parser.add_argument('--edges', default='0,10,20,30,40,50,60', help='Increasing bucket lower bounds')
        parser.add_argument('--output', help='Write the table here as well')

    def handle(self, *args, **options):
        config = self.resolve_config('length-report', options)
        try:
            edges = [int(e) for e in options['edges'].split(',')]
        except ValueError:
            raise ConfigError(f'bad bucket edges {options["edges"]!r}') from None
        buckets = length_buckets(
            read_sentences(options['src']),
            read_sentences(options['ref']),
            read_sentences(options['hyp']),
            edges,
        )
        table = bucket_table(buckets)
        if options['output']:
            output = Path(options['output'])
            output.parent.mkdir(parents=True, exist_ok=True)
            output.write_text(table, encoding='utf-8')
            config.echo_next_to(output)
        self.stdout.write(table)

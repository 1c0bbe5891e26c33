from cli.base import NmtCommand
from corpus.vocab import read_sentences
from evaluation.bleu import bleu


class Command(NmtCommand):
    help = 'Scores tokenized hypotheses against references with corpus BLEU'

    def add_arguments(self, parser):
        parser.add_argument('hypotheses')
        parser.add_argument('references')

    def handle(self, *args, **options):
        report = bleu(read_sentences(options['hypotheses']), read_sentences(options['references']))
        self.stdout.write(str(report))

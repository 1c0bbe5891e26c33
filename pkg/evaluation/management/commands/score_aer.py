from cli.base import NmtCommand
from core_math.exceptions import ConfigError
from corpus.vocab import read_sentences
from evaluation.aer import GoldAlignment, aer


class Command(NmtCommand):
    help = 'Computes the alignment error rate of predicted links against gold sure/possible links'

    def add_arguments(self, parser):
        parser.add_argument('predicted', help='Pharaoh alignment file')
        parser.add_argument('gold', help='Pharaoh gold file; t-s sure, t?s possible')
        parser.add_argument('--src', help='Source sentences; with --tgt, gold links are checked against them')
        parser.add_argument('--tgt', help='Target sentences the links index')

    def handle(self, *args, **options):
        predicted = GoldAlignment.load(options['predicted'])
        gold = GoldAlignment.load(options['gold'])
        if bool(options['src']) != bool(options['tgt']):
            raise ConfigError('--src and --tgt go together')
        if options['src']:
            sources = read_sentences(options['src'])
            targets = read_sentences(options['tgt'])
            gold.check_bounds([len(t) for t in targets], [len(s) for s in sources])
        # predicted files carry sure links only
        value = aer(predicted.sure, gold.sure, gold.possible)
        self.stdout.write(f'AER = {value:.4f} ({len(gold)} sentences)')

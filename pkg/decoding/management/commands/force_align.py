import json
from pathlib import Path

from cli.base import NmtCommand
from core_math.exceptions import DataError
from corpus.vocab import read_sentences
from decoding.alignment import attribute_alignments, format_links
from decoding.translate import force_decode_batch
from nmt.container import load_model


class Command(NmtCommand):
    help = 'Force-decodes reference translations and extracts one-to-one alignments'

    def add_arguments(self, parser):
        parser.add_argument('model', help='Model container (.nmt)')
        parser.add_argument('--src', required=True)
        parser.add_argument('--tgt', required=True, help='Reference translations to force')
        parser.add_argument('--output', required=True, help='Pharaoh alignment file to write')
        parser.add_argument('--weights', help='JSON-lines file of attention matrices (input of plot-attn)')
        parser.add_argument('--batch-size', type=int, default=None)
        parser.add_argument('--config', default=None)

    def handle(self, *args, **options):
        config = self.resolve_config('force-align', options, {'batch_size': options['batch_size']})
        model = load_model(options['model'])
        sources = read_sentences(options['src'])
        references = read_sentences(options['tgt'])
        if len(sources) != len(references):
            raise DataError(f'{len(sources)} source sentences but {len(references)} references')
        pairs = list(zip(sources, references))

        alignment_lines, weight_lines = [], []
        for start in range(0, len(pairs), config.batch_size):
            chunk = pairs[start:start + config.batch_size]
            for (source, reference), records in zip(chunk, force_decode_batch(model, chunk)):
                matrix = attribute_alignments(records, model.spec.attention.score, model.spec.reverse_source)
                alignment_lines.append(format_links(matrix.links))
                weight_lines.append(json.dumps({
                    'source': source,
                    'target': reference,
                    'weights': matrix.weights.tolist(),
                }))
        output = Path(options['output'])
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(''.join(f'{line}\n' for line in alignment_lines), encoding='utf-8')
        if options['weights']:
            Path(options['weights']).write_text(''.join(f'{line}\n' for line in weight_lines), encoding='utf-8')
        config.echo_next_to(output)
        self.stdout.write(self.style.SUCCESS(f'Successfully aligned {len(alignment_lines)} sentence pairs'))

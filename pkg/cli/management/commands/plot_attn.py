import json
from pathlib import Path

import numpy as np

from cli.base import NmtCommand
from cli.heatmap import CELL, plot_attn
from core_math.exceptions import DataError
from corpus.vocab import read_lines
from decoding.alignment import AlignmentMatrix


def read_matrices(path):
    try:
        lines = read_lines(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f'cannot read attention file {path}: {exc}') from exc
    for number, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            item = json.loads(line)
            weights = np.asarray(item['weights'], dtype=np.float64).reshape(len(item['target']), -1)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f'{path}:{number}: not an attention record ({exc})') from exc
        yield item['source'], item['target'], AlignmentMatrix(weights=weights, links=())


class Command(NmtCommand):
    help = 'Draws one grayscale attention heatmap per sentence of a force-align weights file'

    def add_arguments(self, parser):
        parser.add_argument('weights', help='JSON-lines output of force-align --weights')
        parser.add_argument('--output-dir', required=True)
        parser.add_argument('--cell', type=int, default=CELL, help='Pixels per matrix cell')
        parser.add_argument('--svg', action='store_true', help='Also write an SVG rendering')
        parser.add_argument('--config', default=None)

    def handle(self, *args, **options):
        config = self.resolve_config('plot-attn', options)
        output_dir = Path(options['output_dir'])
        count = 0
        for index, (source, target, matrix) in enumerate(read_matrices(options['weights'])):
            plot_attn(matrix, source, target, output_dir / f'sent{index:04d}.pgm', options['cell'], options['svg'])
            count += 1
        config.echo_to(output_dir)
        self.stdout.write(self.style.SUCCESS(f'Successfully wrote {count} heatmaps to {output_dir}'))

"""
Alignment heatmaps.

The raster is a binary PGM: one ``cell`` x ``cell`` pixel block per
(target word, source word) weight, 0 black and 1 white, target rows top to
bottom and source columns in original order, terminator column last.
Token labels go to a text legend next to it. An SVG rendering of the same
grid is optional.
"""
import logging
from pathlib import Path

import numpy as np
from django.template.loader import render_to_string
from PIL import Image

from core_math.exceptions import ShapeError
from corpus.vocab import EOS

logger = logging.getLogger(__name__)

CELL = 16


def gray_levels(weights):
    return np.rint(np.clip(np.asarray(weights, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)


def _check(matrix, source_tokens, target_tokens):
    rows, cols = matrix.weights.shape
    if rows != len(target_tokens) or cols != len(source_tokens) + 1:
        raise ShapeError(
            f"plot_attn: matrix {matrix.weights.shape} does not fit "
            f"{len(target_tokens)} target and {len(source_tokens)} source tokens (+ terminator)"
        )


def legend_lines(source_tokens, target_tokens):
    lines = ['# columns (source, left to right)']
    lines += [f"{s}\t{token}" for s, token in enumerate(list(source_tokens) + [EOS])]
    lines.append('# rows (target, top to bottom)')
    lines += [f"{t}\t{token}" for t, token in enumerate(target_tokens)]
    return lines


def plot_attn(matrix, source_tokens, target_tokens, path, cell=CELL, svg=False):
    """
    Write ``path`` (PGM), ``path`` + ``.legend.txt`` and, with ``svg``, a
    ``.svg`` twin. Returns the list of written paths.
    """
    _check(matrix, source_tokens, target_tokens)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    levels = gray_levels(matrix.weights)
    pixels = np.kron(levels, np.ones((cell, cell), dtype=np.uint8))
    Image.fromarray(pixels).save(path, format='PPM')
    legend = path.with_name(f"{path.name}.legend.txt")
    legend.write_text('\n'.join(legend_lines(source_tokens, target_tokens)) + '\n', encoding='utf-8')
    written = [path, legend]
    if svg:
        written.append(write_svg(levels, source_tokens, target_tokens, path.with_suffix('.svg'), cell))
    logger.debug(f"Heatmap {levels.shape[0]}x{levels.shape[1]} written to {path}")
    return written


def write_svg(levels, source_tokens, target_tokens, path, cell=CELL):
    margin = 8 * cell
    cells = [
        {'x': margin + s * cell, 'y': margin + t * cell, 'level': int(levels[t, s])}
        for t in range(levels.shape[0]) for s in range(levels.shape[1])
    ]
    context = {
        'width': margin + levels.shape[1] * cell,
        'height': margin + levels.shape[0] * cell,
        'cell': cell,
        'cells': cells,
        'columns': [
            {'x': margin + s * cell + cell // 2, 'y': margin - 4, 'token': token}
            for s, token in enumerate(list(source_tokens) + [EOS])
        ],
        'rows': [
            {'x': margin - 4, 'y': margin + t * cell + cell // 2, 'token': token}
            for t, token in enumerate(target_tokens)
        ],
    }
    Path(path).write_text(render_to_string('cli/heatmap.svg', context), encoding='utf-8')
    return Path(path)

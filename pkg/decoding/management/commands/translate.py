from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from cli.base import NmtCommand
from corpus.vocab import read_sentences
from decoding.alignment import attribute_alignments, format_links, unk_replace
from decoding.translate import greedy_translate_batch
from nmt.container import load_model


class Command(NmtCommand):
    help = 'Greedily translates a tokenized file with a trained model'

    def add_arguments(self, parser):
        parser.add_argument('model', help='Model container (.nmt)')
        parser.add_argument('input', help='Tokenized source sentences, one per line')
        parser.add_argument('--output', required=True)
        parser.add_argument('--max-len', type=int, default=None, help='Maximum output words per sentence')
        parser.add_argument('--batch-size', type=int, default=None)
        parser.add_argument('--workers', type=int, default=1, help='Threads translating batches concurrently')
        parser.add_argument('--replace-unk', action='store_true', help='Copy the aligned source word over <unk>')
        parser.add_argument('--show-alignments', action='store_true', help='Also write Pharaoh links to OUTPUT.align')
        parser.add_argument('--config', default=None)

    def handle(self, *args, **options):
        config = self.resolve_config(
            'translate', options,
            {'decode_max_len': options['max_len'], 'batch_size': options['batch_size']},
        )
        model = load_model(options['model'])
        sentences = read_sentences(options['input'])
        chunks = [sentences[i:i + config.batch_size] for i in range(0, len(sentences), config.batch_size)]
        needs_alignment = options['replace_unk'] or options['show_alignments']
        if needs_alignment and model.spec.attention is None:
            self.stderr.write('Model has no attention; --replace-unk and --show-alignments are ignored')
            needs_alignment = False

        def work(chunk):
            return greedy_translate_batch(model, chunk, config.decode_max_len)

        # map() yields in submission order, so output lines follow input lines.
        with ThreadPoolExecutor(max_workers=max(1, options['workers'])) as pool:
            translations = [t for batch in pool.map(work, chunks) for t in batch]

        lines, links = [], []
        truncated = 0
        for translation in translations:
            tokens = list(translation.tokens)
            truncated += translation.truncated
            if needs_alignment:
                matrix = attribute_alignments(
                    translation.records, model.spec.attention.score, translation.reversed_source,
                )
                if options['replace_unk']:
                    tokens = unk_replace(tokens, matrix, translation.source_tokens)
                links.append(format_links(matrix.links))
            lines.append(' '.join(tokens))
        output = Path(options['output'])
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(''.join(f'{line}\n' for line in lines), encoding='utf-8')
        if options['show_alignments'] and needs_alignment:
            Path(f'{output}.align').write_text(''.join(f'{line}\n' for line in links), encoding='utf-8')
        config.echo_next_to(output)
        if truncated:
            self.stdout.write(self.style.WARNING(f'{truncated} translations hit the length limit'))
        self.stdout.write(self.style.SUCCESS(f'Successfully translated {len(lines)} sentences'))

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core_math.exceptions import ConfigError, DataError, NumericalError
from training.schedule import LOSS_NORMALIZATIONS

from .run_config import resolve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Options every Django command carries; they are not part of a run's record.
_DJANGO_OPTIONS = {
    'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color',
    'force_color', 'skip_checks', 'stdout', 'stderr', 'config',
}


class NmtCommand(BaseCommand):
    """
    Base for the toolkit's operator commands.

    Domain errors become ``CommandError`` with the toolkit's exit codes:
    1 usage/configuration, 2 data, 3 numeric failure.
    """
    requires_system_checks = []

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc
        except (DataError, OSError) as exc:
            raise CommandError(str(exc), returncode=EXIT_DATA) from exc
        except NumericalError as exc:
            raise CommandError(str(exc), returncode=EXIT_NUMERIC) from exc

    def resolve_config(self, subcommand, options, overrides=None):
        overrides = overrides or {}
        paths = {
            key: str(value) for key, value in options.items()
            if key not in _DJANGO_OPTIONS and key not in overrides and value is not None
        }
        return resolve(subcommand, options.get('config'), overrides, paths)

    def output_dir(self, options, subcommand):
        """``--output-dir``, or ``settings.NMT_OUTPUT_DIR/<subcommand>`` when the flag is omitted."""
        if not options.get('output_dir'):
            options['output_dir'] = str(settings.NMT_OUTPUT_DIR / subcommand)
        return options['output_dir']


def add_model_arguments(parser):
    """Flags shared by every command that builds or trains a model."""
    parser.add_argument('--config', default=None, help='key=value run configuration file; flags win')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--layers', type=int, default=None)
    parser.add_argument('--cells', type=int, default=None)
    parser.add_argument('--vocab-size', type=int, default=None)
    parser.add_argument('--max-len', type=int, default=None, help='Length filter in words')
    parser.add_argument('--batch-size', type=int, default=None)
    parser.add_argument('--epochs', type=int, default=None)
    parser.add_argument('--halve-after', type=int, default=None)
    parser.add_argument('--lr', type=float, default=None)
    parser.add_argument('--clip-norm', type=float, default=None)
    parser.add_argument(
        '--loss-normalization', choices=LOSS_NORMALIZATIONS, default=None,
        help='Divide the summed batch loss by its sentences or by its target tokens',
    )
    parser.add_argument('--dropout', type=float, default=None)
    parser.add_argument('--attention', default=None, help='none, global, local-m or local-p')
    parser.add_argument('--score', default=None, help='dot, general, concat or location')
    parser.add_argument('--window', type=int, default=None, help='Local attention half-width D')
    parser.add_argument('--s-max', type=int, default=None, help='Source positions scored by location attention')
    parser.add_argument('--input-feeding', dest='input_feeding', action='store_true', default=None)
    parser.add_argument('--no-input-feeding', dest='input_feeding', action='store_false')
    parser.add_argument('--reverse-source', dest='reverse_source', action='store_true', default=None)
    parser.add_argument('--no-reverse-source', dest='reverse_source', action='store_false')
    parser.add_argument('--init-scale', type=float, default=None)


MODEL_OPTION_KEYS = (
    'seed', 'layers', 'cells', 'vocab_size', 'max_len', 'batch_size', 'epochs',
    'halve_after', 'lr', 'clip_norm', 'loss_normalization', 'dropout', 'attention', 'score', 'window',
    's_max', 'input_feeding', 'reverse_source', 'init_scale',
)


def model_overrides(options):
    return {key: options.get(key) for key in MODEL_OPTION_KEYS}

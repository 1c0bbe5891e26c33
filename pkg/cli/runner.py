"""
Process entry point: ``run(argv)`` dispatches a toolkit subcommand and
turns its outcome into an exit status.
"""
import os
import sys

from django.core.management import call_command, execute_from_command_line, get_commands
from django.core.management.base import CommandError

from .base import EXIT_OK, EXIT_USAGE

SUBCOMMANDS = (
    'build-vocab', 'make-toy-corpus', 'train', 'compare', 'translate',
    'force-align', 'score-bleu', 'score-aer', 'length-report', 'plot-attn',
)
HELP_FLAGS = ('help', '--help', '-h', 'version', '--version')


def _usage(argv):
    return (f"usage: {os.path.basename(argv[0]) if argv else 'manage.py'} "
            f"<{'|'.join(SUBCOMMANDS)}> [options]\n")


def _setup():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    import django
    django.setup()


def run(argv=None):
    argv = list(sys.argv if argv is None else argv)
    _setup()
    if len(argv) < 2:
        sys.stderr.write(_usage(argv))
        return EXIT_USAGE
    name = argv[1]
    if name not in SUBCOMMANDS and name.replace('_', '-') not in SUBCOMMANDS:
        if name not in get_commands() and name not in HELP_FLAGS:
            sys.stderr.write(f"error: unknown subcommand '{name}'\n")
            sys.stderr.write(_usage(argv))
            return EXIT_USAGE
        # Django's own commands (test, check, help, ...) keep their behaviour.
        try:
            execute_from_command_line(argv)
        except SystemExit as exc:
            if exc.code is None:
                return EXIT_OK
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return EXIT_OK
    try:
        call_command(name.replace('-', '_'), *argv[2:])
    except CommandError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.returncode
    return EXIT_OK

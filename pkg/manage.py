#!/usr/bin/env python
"""Command-line entry point for the NMT toolkit and Django's own commands."""
import sys


def main():
    """Run a toolkit subcommand or a Django administrative task."""
    try:
        from cli.runner import run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(run(sys.argv))


if __name__ == '__main__':
    main()

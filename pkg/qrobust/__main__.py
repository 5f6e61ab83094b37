"""Entry point for `python -m qrobust`."""

import sys

import click


def main():
    from qrobust.cli import EXIT_CONFIG, EXIT_INTERRUPTED, cli
    from qrobust.logging import setup_logging
    setup_logging()

    try:
        code = cli.main(standalone_mode=False)
    except click.ClickException as e:
        # usage errors exit with 1 rather than click's 2
        e.show()
        code = EXIT_CONFIG
    except click.Abort:
        click.echo("Aborted.", err=True)
        code = EXIT_INTERRUPTED
    sys.exit(code or 0)


if __name__ == "__main__":
    main()

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from ..app import EXIT_IO, EXIT_VALIDATION, App, command_defaults, load_config
from ..errors import DataError, ValidationError
from . import analysis, data, fixtures, model, validate  # noqa: F401
from .base import COMMANDS

log = logging.getLogger(__name__)


class Main(App):
    """
    Dispatch to the selected subcommand
    """
    def run(self) -> int | None:
        command = self.args.command_class(self)
        self.parameters = command.parameters()
        return command.run()


def build_parser(config: dict) -> argparse.ArgumentParser:
    """
    Parser with one subparser per registered command, defaults taken from
    the configuration
    """
    parser = Main.argparser(description="Growth and reclassification of patent classes")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        subparser = subparsers.add_parser(command.NAME, help=command.HELP, description=command.HELP)
        command.add_arguments(subparser)
        subparser.set_defaults(command_class=command)
        if not (defaults := command_defaults(config, command.NAME)):
            continue
        known = {action.dest for action in subparser._actions}
        if unknown := sorted(set(defaults) - known):
            log.warning("%s: ignoring unknown configuration options: %s", command.NAME, ", ".join(unknown))
        subparser.set_defaults(**{key: value for key, value in defaults.items() if key in known})
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    try:
        config = load_config(known.config)
    except DataError as e:
        print(f"pyreclass: {e}", file=sys.stderr)
        return EXIT_IO

    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except ValidationError as e:
        print(f"pyreclass: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    with Main(args) as app:
        return app.main()


if __name__ == "__main__":
    sys.exit(main())

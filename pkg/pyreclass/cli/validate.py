from __future__ import annotations

import argparse
import logging

from .. import validation
from ..app import EXIT_VALIDATION
from .base import Command, register

log = logging.getLogger(__name__)


@register
class Validate(Command):
    """
    Run the acceptance checks and print a summary table
    """
    NAME = "validate"
    HELP = "run the acceptance checks"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--check", action="append", metavar="NAME", help="run only this check, can be repeated")
        parser.add_argument("--list", action="store_true", help="list the available checks")
        parser.add_argument("--out", type=str, help="also write the results to this JSON file")

    def run(self):
        if self.args.list:
            for check in validation.CHECKS:
                print(f"{check.__name__}: {validation.describe(check)}")
            return None

        results = validation.run_checks(self.args.check)
        print(validation.format_table(results))
        if self.args.out:
            self.app.write_json([r._asdict() for r in results], self.args.out)
        if not validation.all_passed(results):
            log.error("%d checks failed", sum(not r.passed for r in results))
            return EXIT_VALIDATION
        return None

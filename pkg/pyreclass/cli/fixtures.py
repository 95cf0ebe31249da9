from __future__ import annotations

import argparse
import logging
from pathlib import Path

from .. import fixtures, simulator
from ..errors import ValidationError
from .base import Command, register

log = logging.getLogger(__name__)

KINDS = ("reclassification", "proportional", "simulated")


@register
class Fixtures(Command):
    """
    Write synthetic editions with a known construction
    """
    NAME = "fixtures"
    HELP = "generate synthetic classification editions"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--kind", choices=KINDS, default="reclassification",
                            help="kind of fixture (default: %(default)s)")
        parser.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
        parser.add_argument("--families", type=int, default=1000,
                            help="families, or families per filing year for simulated fixtures"
                                 " (default: %(default)s)")
        parser.add_argument("--classes", type=int, default=30,
                            help="classes of proportional fixtures, sized 20, 40, ... (default: %(default)s)")
        parser.add_argument("--rate", type=float, default=0.05,
                            help="additions per family of proportional fixtures (default: %(default)g)")
        cls.add_model_arguments(parser)
        parser.add_argument("--window", type=int, nargs=2, metavar=("START", "END"),
                            help="simulated years of the two editions of simulated fixtures")
        parser.add_argument("--min-lag", type=int, default=5,
                            help="leave out cohorts filed fewer years before the window (default: %(default)s)")
        parser.add_argument("--out", type=Path, help="output directory")

    def simulated(self) -> list:
        self.require("window")
        params = self.model_params(strict=False)
        start, end = self.args.window
        matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=end))
        stream = simulator.emit_reclass_events(matrix, params, [(start, end)])
        rates = {r.filing_year: r.rate for r in stream if r.event_year - r.filing_year >= self.args.min_lag}
        if not rates:
            raise ValidationError(f"no cohort is filed {self.args.min_lag} years before {start}")
        return list(fixtures.rate_fixture(
            rates, families_per_year=self.args.families, labels=(str(start), str(end)), seed=self.args.seed))

    def run(self):
        self.require("out")
        self.app.seed = self.args.seed
        out: Path = self.args.out
        match self.args.kind:
            case "reclassification":
                earlier, later, plan = fixtures.reclassification_fixture(
                    seed=self.args.seed, families=self.args.families)
                editions = [earlier, later]
                out.mkdir(parents=True, exist_ok=True)
                self.app.write_frame(plan.to_frame(), out / "plan.csv")
            case "proportional":
                sizes = [20 * k for k in range(1, self.args.classes + 1)]
                editions = list(fixtures.proportional_fixture(sizes, rate=self.args.rate, seed=self.args.seed))
            case "simulated":
                editions = self.simulated()
            case _:
                raise ValidationError(f"unknown fixture kind {self.args.kind!r}")
        manifest = fixtures.write_editions(editions, out)
        print(manifest)

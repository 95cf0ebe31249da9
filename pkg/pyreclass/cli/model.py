from __future__ import annotations

import argparse
import logging

import pandas

from .. import model, simulator
from ..errors import ValidationError
from .base import Command, cohort, register, year_range

log = logging.getLogger(__name__)


@register
class Solve(Command):
    """
    Solve the growth equation and print the predicted quantities
    """
    NAME = "solve"
    HELP = "solve for the growth factor and derived quantities"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        cls.add_model_arguments(parser)
        parser.add_argument("--w0", type=float, help="classifications per new patent")
        parser.add_argument("--tol", type=float, default=model.DEFAULT_TOL,
                            help="tolerance on the growth factor (default: %(default)g)")
        parser.add_argument("--out", type=str, help="also write the results to this JSON file")

    def run(self):
        params = self.model_params()
        growth, predicted = model.predict(params, w0=self.args.w0, tol=self.args.tol)
        log.info("%s: %s", params, growth)
        result = {
            "params": {"alpha": params.alpha, "beta": params.beta},
            "growth": growth,
            "predicted": predicted,
            "slow_growth_approx": model.slow_growth_approx(params),
        }
        if self.args.out:
            self.app.write_json(result, self.args.out)
        self.app.print_json(result)


@register
class Simulate(Command):
    """
    Iterate the cohort dynamics and write the cohort matrix
    """
    NAME = "simulate"
    HELP = "simulate the cohort matrix"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        cls.add_model_arguments(parser)
        parser.add_argument("--horizon", type=int, help="last simulated year")
        parser.add_argument("--mode", choices=simulator.MODES, default="patents",
                            help="count patents or classifications (default: %(default)s)")
        parser.add_argument("--w0", type=float, default=1.0,
                            help="classifications per new patent in classification mode (default: %(default)g)")
        parser.add_argument("--cohort", type=cohort, action="append", metavar="TAU:COUNT",
                            help="initial cohort, can be repeated (default: 0:1)")
        parser.add_argument("--out", type=str, help="cohort matrix CSV")
        parser.add_argument("--totals", type=str, help="also write n(t) and the reclassified totals to this CSV")

    def run(self):
        self.require("horizon", "out")
        config = simulator.SimulationConfig(
            params=self.model_params(strict=False),
            horizon=self.args.horizon,
            initial_cohorts=tuple(self.args.cohort or ((0, 1.0),)),
            mode=self.args.mode,
            w0=self.args.w0)
        matrix = simulator.run(config)
        self.app.write_frame(matrix.to_frame(), self.args.out)
        if self.args.totals:
            n = simulator.totals(matrix)
            reclassified = [
                simulator.reclassified_total(matrix, config.params, t) if t < matrix.horizon else float("nan")
                for t in range(matrix.horizon + 1)]
            self.app.write_frame(
                pandas.DataFrame({"t": range(matrix.horizon + 1), "total": n, "reclassified": reclassified}),
                self.args.totals)


@register
class ExactTotal(Command):
    """
    Closed-form totals n(t), independent of the simulator
    """
    NAME = "exact-total"
    HELP = "compute n(t) from the closed-form cohort counts"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        cls.add_model_arguments(parser)
        parser.add_argument("--horizon", type=int, help="last year computed")
        parser.add_argument("--out", type=str, help="CSV with columns t and total")

    def run(self):
        self.require("horizon", "out")
        params = self.model_params(strict=False)
        if self.args.horizon < 0:
            raise ValidationError(f"horizon must be nonnegative, got {self.args.horizon}")
        frame = pandas.DataFrame({
            "t": range(self.args.horizon + 1),
            "total": [model.exact_total(params, t) for t in range(self.args.horizon + 1)],
        })
        self.app.write_frame(frame, self.args.out)


@register
class Events(Command):
    """
    Simulated reclassification records for observation windows
    """
    NAME = "events"
    HELP = "emit per-cohort reclassification records from a simulation"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        cls.add_model_arguments(parser)
        parser.add_argument("--horizon", type=int, help="last simulated year")
        parser.add_argument("--window", type=year_range, action="append", metavar="START:END",
                            help="observation window, can be repeated")
        parser.add_argument("--out", type=str, help="event stream CSV")

    def run(self):
        self.require("horizon", "window", "out")
        params = self.model_params(strict=False)
        matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=self.args.horizon))
        stream = simulator.emit_reclass_events(matrix, params, self.args.window)
        log.info("%d records over %d windows", len(stream), len(self.args.window))
        self.app.write_frame(stream.to_frame(), self.args.out)

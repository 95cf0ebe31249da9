from __future__ import annotations

import argparse
import logging
from pathlib import Path

import pandas

from .. import estimation, snapshots
from ..errors import ValidationError
from ..simulator import ReclassEventStream
from ..tables import read_table
from .base import Command, register, year_range

log = logging.getLogger(__name__)


class SnapshotCommand(Command):
    """
    Command reading classification editions
    """
    @classmethod
    def add_snapshot_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--years", type=year_range, metavar="START:END",
                            help="only load families filed in this range")
        parser.add_argument("--jurisdiction", action="store_true",
                            help="only load families filed both in the US and abroad")

    def load(self, name: str, path: Path, label: str | None = None) -> snapshots.EditionSnapshot:
        self.app.add_input(name, path)
        res = snapshots.load_snapshot(
            path, label=label, year_bounds=self.args.years, require_jurisdiction=self.args.jurisdiction)
        log.info("%s: %d families, %d diagnostics, %d filtered out",
                 path, len(res), len(res.diagnostics), res.filtered)
        return res


@register
class Diff(SnapshotCommand):
    """
    Compare two editions of the classification
    """
    NAME = "diff"
    HELP = "tally reclassifications between two editions"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--earlier", type=Path, help="snapshot CSV of the earlier edition")
        parser.add_argument("--later", type=Path, help="snapshot CSV of the later edition")
        parser.add_argument("--manifest", type=Path, help="YAML mapping of edition labels to snapshot files")
        parser.add_argument("--labels", nargs=2, metavar=("EARLIER", "LATER"),
                            help="editions of the manifest to compare (default: the only two)")
        cls.add_level_argument(parser)
        cls.add_snapshot_arguments(parser)
        parser.add_argument("--out", type=str, help="CSV of additions and removals per class and filing year")
        parser.add_argument("--rates", type=str, help="also write net rates per filing year to this CSV")
        parser.add_argument("--sizes", type=str, help="also write reclassifications against class size to this CSV")

    def editions(self) -> tuple[snapshots.EditionSnapshot, snapshots.EditionSnapshot]:
        if self.args.manifest is not None:
            if self.args.earlier is not None or self.args.later is not None:
                raise ValidationError("use either --manifest or --earlier and --later")
            self.app.add_input("manifest", self.args.manifest)
            files = snapshots.load_manifest(self.args.manifest)
            if self.args.labels:
                labels = self.args.labels
            elif len(files) == 2:
                labels = list(files)
            else:
                raise ValidationError(f"{self.args.manifest} lists {len(files)} editions: choose two with --labels")
            if missing := [label for label in labels if label not in files]:
                raise ValidationError(f"{self.args.manifest}: no edition {', '.join(missing)}")
            return (self.load("earlier", files[labels[0]], labels[0]),
                    self.load("later", files[labels[1]], labels[1]))
        self.require("earlier", "later")
        return self.load("earlier", self.args.earlier), self.load("later", self.args.later)

    def run(self):
        self.require("out")
        earlier, later = self.editions()
        result = snapshots.diff(earlier, later, self.args.level)
        self.app.write_frame(result.to_frame(), self.args.out)

        summary = {
            "earlier": earlier.edition_label,
            "later": later.edition_label,
            "level": self.args.level,
            "families_compared": len(earlier.records.keys() & later.records.keys()),
            "diagnostics": len(earlier.diagnostics) + len(later.diagnostics),
            "reclass_proportion": estimation.measured_reclass_proportion(result),
        }
        if self.args.rates:
            self.app.write_frame(snapshots.net_rates_by_filing_year(result).to_frame(), self.args.rates)
        if self.args.sizes:
            table = snapshots.reclass_vs_size(result, earlier)
            self.app.write_frame(table, self.args.sizes)
            scaling = snapshots.size_scaling(table)
            summary["size_scaling"] = dict(scaling._asdict(), constant=scaling.constant)
        self.app.print_json(summary)


@register
class Rates(Command):
    """
    Net reclassification rates per filing year from a stored diff
    """
    NAME = "rates"
    HELP = "compute net reclassification rates per filing year from a diff"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", type=Path, help="diff CSV")
        parser.add_argument("--window", type=year_range, metavar="START:END",
                            help="years of the two compared editions")
        cls.add_level_argument(parser)
        parser.add_argument("--out", type=str, help="event stream CSV")

    def run(self):
        self.require("window", "out")
        path = self.input_path("input")
        start, end = self.args.window
        frame = read_table(path, snapshots.DiffResult.COLUMNS, dtype={"class_id": "str"})
        result = snapshots.DiffResult.from_frame(frame, str(start), str(end), self.args.level)
        stream = snapshots.net_rates_by_filing_year(result)
        self.app.write_frame(stream.to_frame(), self.args.out)
        self.app.print_json({
            "records": len(stream),
            "skipped": stream.skipped,
            "reclass_proportion": estimation.measured_reclass_proportion(result),
        })


@register
class FitBeta(Command):
    """
    Reclassification rate fitted on an event stream
    """
    NAME = "fit-beta"
    HELP = "fit the reclassification rate on per-cohort reclassification records"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", type=Path, help="event stream CSV")
        parser.add_argument("--window-size", type=int, default=3,
                            help="years between the compared observations (default: %(default)s)")
        parser.add_argument("--lag-offset", type=int, default=0,
                            help="added to every event lag (default: %(default)s)")
        parser.add_argument("--min-lag", type=int, default=estimation.DEFAULT_MIN_LAG,
                            help="leave out cohorts filed fewer years before the window (default: %(default)s)")
        parser.add_argument("--compounded", action="store_true",
                            help="fit the compounded growth over the window")
        parser.add_argument("--out", type=str, help="also write the fit to this JSON file")

    def run(self):
        path = self.input_path("input")
        frame = read_table(path, ReclassEventStream.COLUMNS)
        stream = ReclassEventStream.from_frame(frame, window_size=self.args.window_size)
        if self.args.compounded:
            if self.args.lag_offset:
                raise ValidationError("--lag-offset does not apply to the compounded fit")
            fit = estimation.fit_beta_compounded(stream, min_lag=self.args.min_lag)
        else:
            fit = estimation.fit_beta(stream, lag_offset=self.args.lag_offset, min_lag=self.args.min_lag)
        log.info("%s: %s", path, fit)
        result = {"fit": fit}
        if self.args.out:
            self.app.write_json(result, self.args.out)
        self.app.print_json(result)


@register
class Counts(SnapshotCommand):
    """
    Classification count table of one edition
    """
    NAME = "counts"
    HELP = "count classifications and families per filing year in one edition"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--snapshot", type=Path, help="snapshot CSV")
        parser.add_argument("--present-year", type=int,
                            help="year the edition was observed (default: from the file name)")
        cls.add_level_argument(parser)
        cls.add_snapshot_arguments(parser)
        parser.add_argument("--out", type=str, help="count table CSV")

    def run(self):
        self.require("snapshot", "out")
        snapshot = self.load("snapshot", self.args.snapshot)
        table = estimation.count_table(snapshot, self.args.level, present_year=self.args.present_year)
        self.app.write_frame(table.to_frame(), self.args.out)


@register
class EstimateAlpha(Command):
    """
    Triggering rates estimated from a back-corrected count table
    """
    NAME = "estimate-alpha"
    HELP = "estimate the triggering rate per filing year"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", type=Path, help="count table CSV")
        parser.add_argument("--beta", type=float, help="reclassification rate used for back-correction")
        parser.add_argument("--year", type=int, action="append", help="filing year to estimate, can be repeated")
        parser.add_argument("--years", type=year_range, metavar="START:END", help="filing years to estimate")
        parser.add_argument("--present-year", type=int, help="year of the latest observation")
        parser.add_argument("--depth", type=int, default=estimation.DEFAULT_DEPTH,
                            help="correct lags up to this many years past filing (default: %(default)s)")
        parser.add_argument("--full-depth", action="store_true", help="correct all lags")
        parser.add_argument("--form", choices=("linear", "exact"), default="linear",
                            help="per-year correction factor (default: %(default)s)")
        parser.add_argument("--lagged", action="store_true",
                            help="estimate earlier years as observed the year before")
        parser.add_argument("--growth-window", type=year_range, metavar="START:END",
                            help="also fit the growth factor of the corrected counts on this range")
        parser.add_argument("--out", type=str, help="also write the estimates to this JSON file")

    def years(self, table: estimation.ClassificationCountTable) -> list[int]:
        years: set[int] = set(self.args.year or ())
        if self.args.years:
            start, end = self.args.years
            years.update(y for y in table.filing_years() if start <= y <= end)
        if not years:
            raise ValidationError("choose filing years with --year or --years")
        return sorted(years)

    def run(self):
        self.require("beta")
        path = self.input_path("input")
        frame = read_table(
            path, ["filing_year", "observation_year", "classifications"], optional=["unique_families"])
        table = estimation.ClassificationCountTable.from_frame(frame, present_year=self.args.present_year)
        depth = None if self.args.full_depth else self.args.depth
        estimates = estimation.estimate_alpha_series(
            table, self.args.beta, self.years(table),
            depth=depth, form=self.args.form, lagged_denominator=self.args.lagged)
        result: dict = {"estimates": estimates}

        if self.args.growth_window:
            start, end = self.args.growth_window
            corrected = pandas.Series({
                y: estimation.back_correct(table, self.args.beta, y, depth=depth, form=self.args.form)
                for y in table.filing_years() if start <= y <= end})
            growth = estimation.fit_growth_ols(corrected, self.args.growth_window)
            result["growth"] = growth._asdict()

        if self.args.out:
            self.app.write_json(result, self.args.out)
        self.app.print_json(result)

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from .. import analysis, simulator
from ..errors import ValidationError
from ..model import ModelParams
from ..tables import read_table
from .base import Command, level, register, year_range
from .data import SnapshotCommand

log = logging.getLogger(__name__)


@register
class Panel(SnapshotCommand):
    """
    Yearly counts per class of one edition
    """
    NAME = "panel"
    HELP = "count classifications and patents per class and filing year"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--snapshot", type=Path, help="snapshot CSV")
        cls.add_level_argument(parser)
        parser.add_argument("--code-level", type=level,
                            help="count distinct classes at this level instead of distinct codes")
        cls.add_snapshot_arguments(parser)
        parser.add_argument("--out", type=str, help="panel CSV")

    def run(self):
        self.require("snapshot", "out")
        snapshot = self.load("snapshot", self.args.snapshot)
        panel = analysis.build_panel(snapshot, self.args.level, code_level=self.args.code_level)
        self.app.write_frame(panel.to_frame(), self.args.out)


class GroupsCommand(Command):
    """
    Command producing group statistics
    """
    @classmethod
    def add_outlier_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--exclude-outliers", action="store_true",
                            help="leave out groups with many classifications per patent")
        parser.add_argument("--outlier-threshold", type=float, default=analysis.DEFAULT_OUTLIER_THRESHOLD,
                            help="classifications per patent above which a group is an outlier"
                                 " (default: %(default)g)")
        parser.add_argument("--whole-subclass", action="store_true",
                            help="leave out every group of a subclass containing an outlier")

    def write_stats(self, stats: list[analysis.GroupStats]):
        if self.args.exclude_outliers:
            exclusion = analysis.exclude_outlier_subclasses(
                stats, self.args.outlier_threshold, whole_subclass=self.args.whole_subclass)
            stats = exclusion.kept
        self.app.write_frame(analysis.stats_to_frame(stats), self.args.out)


@register
class Groups(GroupsCommand):
    """
    Growth and classifications per patent of every active class of a panel
    """
    NAME = "groups"
    HELP = "measure growth and classifications per patent of each class"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--panel", type=Path, help="panel CSV")
        cls.add_level_argument(parser)
        parser.add_argument("--years", type=year_range, metavar="START:END", help="measurement window")
        parser.add_argument("--recent", type=int, action="append", metavar="YEAR",
                            help="add the log patent count of this year as a control, can be repeated")
        cls.add_outlier_arguments(parser)
        parser.add_argument("--out", type=str, help="group statistics CSV")

    def run(self):
        self.require("years", "out")
        path = self.input_path("panel")
        frame = read_table(path, ["class_id", "year", *analysis.ClassPanel.COLUMNS], dtype={"class_id": "str"})
        panel = analysis.ClassPanel.from_frame(frame, self.args.level)
        stats = analysis.group_stats(panel, self.args.years, self.args.recent or ())
        if not stats:
            raise ValidationError(f"{path}: no class is active in every year of {self.args.years}")
        self.write_stats(stats)


@register
class Ecosystem(GroupsCommand):
    """
    Group statistics of independently simulated classes
    """
    NAME = "ecosystem"
    HELP = "simulate one class per beta value and measure its growth and classifications per patent"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--alpha", type=float, help="triggering rate shared by all classes")
        parser.add_argument("--beta", type=float, action="append", help="reclassification rate, one per class")
        parser.add_argument("--w0", type=float, default=1.0,
                            help="classifications per new patent (default: %(default)g)")
        parser.add_argument("--horizon", type=int, help="last simulated year")
        parser.add_argument("--years", type=year_range, metavar="START:END", help="measurement window")
        parser.add_argument("--section", default="H", help="section letter of the class names (default: %(default)s)")
        cls.add_outlier_arguments(parser)
        parser.add_argument("--out", type=str, help="group statistics CSV")

    def run(self):
        self.require("alpha", "beta", "horizon", "years", "out")
        params = {
            f"{self.args.section}{i:02d}X": ModelParams(self.args.alpha, beta).validate()
            for i, beta in enumerate(self.args.beta)}
        matrices = simulator.ecosystem(params, self.args.horizon, w0=self.args.w0)
        self.write_stats(analysis.ecosystem_stats(matrices, self.args.years))


@register
class Regress(Command):
    """
    Per-section regressions of growth on classifications per patent
    """
    NAME = "regress"
    HELP = "regress class growth on classifications per patent, per section"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", type=Path, help="group statistics CSV")
        parser.add_argument("--spec", choices=(*analysis.ROBUSTNESS_SPECS, "all"), default="all",
                            help="regression specification (default: %(default)s)")
        parser.add_argument("--min-groups", type=int, help="fewest groups a section needs")
        parser.add_argument("--lenient", action="store_true", help="skip sections with too few groups")
        parser.add_argument("--correlations", type=str,
                            help="also write per-section correlations of growth and classifications per patent")
        parser.add_argument("--out", type=str, help="also write the regressions to this JSON file")

    def run(self):
        path = self.input_path("input")
        frame = read_table(path, ["class_id", "g_k", "w_k"], dtype={"class_id": "str"})
        if frame.empty:
            raise ValidationError(f"{path}: no groups to regress")
        stats = analysis.stats_from_frame(read_table(path, list(frame.columns), dtype={"class_id": "str"}))
        specs = analysis.ROBUSTNESS_SPECS if self.args.spec == "all" else (self.args.spec,)
        result = {
            spec: analysis.run_robustness_suite(
                stats, spec, min_groups=self.args.min_groups, strict=not self.args.lenient)
            for spec in specs}
        for spec, by_section in result.items():
            for section, regression in by_section.items():
                log.info("%s, section %s:\n%s", spec, section, regression)
        if self.args.correlations:
            self.app.write_frame(analysis.section_correlations(stats), self.args.correlations)
        if self.args.out:
            self.app.write_json(result, self.args.out)
        self.app.print_json({"regressions": result})

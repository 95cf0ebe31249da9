from __future__ import annotations

import math
import unittest

import numpy

from pyreclass import analysis, model, simulator
from pyreclass.analysis import ClassPanel, GroupStats
from pyreclass.errors import InactiveClassError, RankDeficiencyError, ValidationError
from pyreclass.fixtures import panel_fixture
from pyreclass.model import ModelParams
from pyreclass.validation import planted_stats


def growing_snapshot(years=range(2000, 2010)):
    """
    H01L doubles every year, G06F stays constant and A01B only appears in
    some years
    """
    plan: dict[str, tuple[int, list[str]]] = {}
    for year in years:
        for i in range(2 ** (year - 2000)):
            plan[f"H{year}-{i}"] = (year, ["H01L21/02", "H01L21/04", "G06F3/00"] if i == 0 else ["H01L21/02"])
        for i in range(3):
            plan[f"G{year}-{i}"] = (year, ["G06F1/00"])
        if year % 2:
            plan[f"A{year}"] = (year, ["A01B1/00"])
    return panel_fixture(plan, label="2016")


class TestPanel(unittest.TestCase):
    def test_counts(self):
        snapshot = panel_fixture({
            "F1": (2000, ["H01L21/02", "H01L21/04", "G06F3/00"]),
            "F2": (2000, ["H01L21/02"]),
            "F3": (2001, ["G06F1/00", "G06F1/02"]),
        })
        panel = analysis.build_panel(snapshot, "subclass")
        row = panel.frame.loc[("H01L", 2000)]
        self.assertEqual(row["classifications"], 3)
        self.assertEqual(row["unique"], 2)
        self.assertAlmostEqual(row["fractional"], 1.5)
        self.assertEqual(row["carried"], 4)
        row = panel.frame.loc[("G06F", 2000)]
        self.assertEqual(row["classifications"], 1)
        self.assertEqual(row["unique"], 1)
        self.assertAlmostEqual(row["fractional"], 0.5)
        self.assertEqual(row["carried"], 3)
        self.assertEqual(panel.class_ids(), ["G06F", "H01L"])
        self.assertEqual(panel.years(), (2000, 2001))

    def test_code_level(self):
        snapshot = panel_fixture({"F1": (2000, ["H01L21/02", "H01L21/04", "G06F3/00"])})
        panel = analysis.build_panel(snapshot, "subclass", code_level="main_group")
        self.assertEqual(panel.frame.loc[("H01L", 2000)]["classifications"], 1)
        self.assertEqual(panel.frame.loc[("H01L", 2000)]["carried"], 2)

    def test_fractional_conservation(self):
        snapshot = growing_snapshot()
        panel = analysis.build_panel(snapshot, "subclass")
        per_year = panel.frame["fractional"].groupby(level="year").sum()
        families: dict[int, int] = {}
        for year, _ in snapshot.records.values():
            families[year] = families.get(year, 0) + 1
        self.assertEqual(sorted(per_year.index), sorted(families))
        for year, count in families.items():
            self.assertAlmostEqual(per_year[year], count, places=9)

    def test_series(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        series = panel.series("A01B", "unique", (2000, 2003))
        self.assertEqual(list(series), [0.0, 1.0, 0.0, 1.0])
        with self.assertRaises(ValidationError):
            panel.series("B60L")
        with self.assertRaises(ValidationError):
            panel.series("A01B", "bogus")
        self.assertEqual(panel.year_totals("unique")[2000], 1 + 4)

    def test_frame(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        frame = panel.to_frame()
        self.assertEqual(list(frame.columns), ["class_id", "year", *ClassPanel.COLUMNS])
        rebuilt = ClassPanel.from_frame(frame)
        self.assertTrue(rebuilt.frame.equals(panel.frame))

    def test_growth(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        self.assertAlmostEqual(analysis.group_growth(panel, "H01L", (2000, 2009)), 2.0)
        self.assertAlmostEqual(analysis.group_growth(panel, "G06F", (2000, 2009)), 1.0)
        with self.assertRaises(InactiveClassError) as e:
            analysis.group_growth(panel, "A01B", (2000, 2009))
        self.assertEqual(e.exception.year, 2000)

    def test_class_per_family(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        # One family per year carries 3 codes, the others carry 1
        expected = (3 * 10 + (2 ** 10 - 1 - 10)) / (2 ** 10 - 1)
        self.assertAlmostEqual(analysis.class_per_family(panel, "H01L", (2000, 2009)), expected)
        yearly = [(3 + 2 ** k - 1) / 2 ** k for k in range(10)]
        self.assertAlmostEqual(
            analysis.year_avg_class_per_family(panel, "H01L", (2000, 2009)), sum(yearly) / 10)


class TestGroupStats(unittest.TestCase):
    def test_group_stats(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        stats = analysis.group_stats(panel, (2000, 2009), recent_years=[2008, 2009])
        self.assertEqual([s.class_id for s in stats], ["G06F", "H01L"])
        self.assertEqual(stats.skipped, ["A01B"])
        h01l = stats[1]
        self.assertAlmostEqual(h01l.g_k, 2.0)
        self.assertAlmostEqual(h01l.log_group_total, math.log(2 ** 10 - 1))
        self.assertEqual([y for y, _ in h01l.log_recent], [2008, 2009])
        self.assertAlmostEqual(h01l.regressor("log_patents_2009"), math.log(2 ** 9))
        self.assertEqual(h01l.section, "H")
        self.assertEqual(h01l.subclass, "H01L")

    def test_recent_years_without_patents(self):
        panel = analysis.build_panel(growing_snapshot(), "subclass")
        stats = analysis.group_stats(panel, (2000, 2005), recent_years=[2012])
        self.assertEqual(list(stats), [])
        self.assertEqual(sorted(stats.skipped), ["A01B", "G06F", "H01L"])

    def test_frame(self):
        stats = planted_stats(0.01, sections=("A",), groups=5)
        frame = analysis.stats_to_frame(stats)
        self.assertIn("log_patents_2013", frame.columns)
        rebuilt = analysis.stats_from_frame(frame)
        self.assertEqual([s.class_id for s in rebuilt], [s.class_id for s in stats])
        self.assertEqual(rebuilt[2].log_recent, stats[2].log_recent)
        self.assertEqual(rebuilt[2].w_k, stats[2].w_k)

    def test_regressor(self):
        s = GroupStats("H01L", 1.1, 3.0, 3.2, 1.09, 5.0, 4.5)
        self.assertAlmostEqual(s.regressor("growth_rate"), 0.1)
        self.assertEqual(s.regressor("year_av_class_per_family"), 3.2)
        with self.assertRaises(ValidationError):
            s.regressor("log_patents_2000")
        with self.assertRaises(ValidationError):
            s.regressor("bogus")

    def test_ecosystem(self):
        alpha, w0 = 0.025, 1.25
        matrices = simulator.ecosystem(
            {f"H{i:02d}X": ModelParams(alpha, float(beta)) for i, beta in enumerate(numpy.linspace(0.2, 0.6, 5))},
            horizon=150, w0=w0)
        stats = analysis.ecosystem_stats(matrices, (110, 140))
        self.assertEqual(len(stats), 5)
        for s, beta in zip(stats, numpy.linspace(0.2, 0.6, 5)):
            g = model.growth_factor(ModelParams(alpha, float(beta))).g
            self.assertLess(abs(s.g_k - g), 0.002)
            self.assertLess(abs(s.w_k / model.class_per_patent(w0, g, alpha) - 1), 0.02)


class TestRegression(unittest.TestCase):
    def test_normal_equations(self):
        rng = numpy.random.default_rng(1)
        X = rng.normal(size=(100, 2))
        y = X @ [2.0, -1.0] + 0.5 + rng.normal(size=100)
        fit = analysis.ols(y, X, names=["a", "b"])
        design = numpy.column_stack((X, numpy.ones(100)))
        brute = numpy.linalg.solve(design.T @ design, design.T @ y)
        numpy.testing.assert_allclose(fit.coefficients, brute, atol=1e-8)
        self.assertEqual(fit.names, ["a", "b", analysis.CONSTANT])
        self.assertEqual(fit.df_resid, 97)
        residuals = y - design @ brute
        sigma2 = residuals @ residuals / 97
        covariance = sigma2 * numpy.linalg.inv(design.T @ design)
        numpy.testing.assert_allclose(fit.std_errors, numpy.sqrt(numpy.diag(covariance)), rtol=1e-8)
        self.assertLess(fit.p_value("a"), 0.01)

    def test_perfect_fit(self):
        x = numpy.arange(10.0)
        fit = analysis.ols(3 * x + 1, x)
        self.assertAlmostEqual(fit.coefficient("x0"), 3.0)
        self.assertAlmostEqual(fit.coefficient(analysis.CONSTANT), 1.0)
        self.assertAlmostEqual(fit.r_squared, 1.0)
        self.assertLess(fit.residual_std_error, 1e-10)

    def test_rank_deficient(self):
        x = numpy.arange(10.0)
        with self.assertRaises(RankDeficiencyError) as e:
            analysis.ols(x, numpy.column_stack((x, 2 * x)), names=["a", "b"])
        self.assertEqual(e.exception.column, "b")
        with self.assertRaises(RankDeficiencyError) as e:
            analysis.ols(x, numpy.column_stack((x, numpy.ones(10))), names=["a", "b"])
        self.assertEqual(e.exception.column, "b")
        with self.assertRaises(ValidationError):
            analysis.ols(x[:2], numpy.column_stack((x[:2], x[:2] ** 2)))

    def test_planted_effect(self):
        suite = analysis.run_robustness_suite(planted_stats(0.01), "controls")
        self.assertEqual(sorted(suite), ["A", "B", "G", "H"])
        for result in suite.values():
            self.assertAlmostEqual(result.coefficient("class_per_family"), 0.01)
            self.assertEqual(result.names[-1], analysis.CONSTANT)
            self.assertIn("log_patents_2014", result.names)

    def test_specs(self):
        stats = planted_stats(0.01, groups=20)
        for spec in analysis.ROBUSTNESS_SPECS:
            suite = analysis.run_robustness_suite(stats, spec)
            self.assertEqual(len(suite), 4)
        with self.assertRaises(ValidationError):
            analysis.run_robustness_suite(stats, "bogus")

    def test_excluded_section(self):
        stats = planted_stats(0.01, sections=("A", "Y"), groups=20)
        self.assertEqual(list(analysis.run_robustness_suite(stats)), ["A"])

    def test_min_groups(self):
        stats = planted_stats(0.01, sections=("A", "B"), groups=20)
        stats = [s for s in stats if s.section == "A"] + [s for s in stats if s.section == "B"][:4]
        with self.assertRaises(ValidationError):
            analysis.run_robustness_suite(stats)
        self.assertEqual(list(analysis.run_robustness_suite(stats, strict=False)), ["A"])

    def test_correlations(self):
        stats = planted_stats(0.01, sections=("A",), groups=30)
        frame = analysis.section_correlations(stats)
        self.assertEqual(list(frame["section"]), ["A"])
        self.assertGreater(frame["r2"][0], 0)
        self.assertAlmostEqual(analysis.pearson_r2([1, 2, 3], [2, 4, 6]), 1.0)
        with self.assertRaises(ValidationError):
            analysis.pearson_r2([1, 1, 1], [1, 2, 3])

    def test_pearson_invariants(self):
        rng = numpy.random.default_rng(5)
        for _ in range(10):
            x = rng.normal(size=30)
            y = 0.7 * x + rng.normal(size=30)
            r2 = analysis.pearson_r2(x, y)
            self.assertTrue(0 <= r2 <= 1)
            self.assertAlmostEqual(analysis.pearson_r2(y, x), r2, places=12)
            self.assertAlmostEqual(analysis.pearson_r2(3.5 * x - 2, 0.2 * y + 10), r2, places=12)
            self.assertAlmostEqual(analysis.ols(y, x).r_squared, r2, places=10)

    def test_stars(self):
        self.assertEqual(analysis.significance_stars(0.001), "***")
        self.assertEqual(analysis.significance_stars(0.2), "")


class TestOutliers(unittest.TestCase):
    def test_exclusion(self):
        stats = [
            GroupStats("H01L21", 1.1, 12.0, 12.0, 1.1, 5.0, 5.0),
            GroupStats("H01L23", 1.1, 3.0, 3.0, 1.1, 5.0, 5.0),
            GroupStats("G06F3", 1.1, 2.0, 2.0, 1.1, 5.0, 5.0),
        ]
        result = analysis.exclude_outlier_subclasses(stats)
        self.assertEqual([s.class_id for s in result.kept], ["H01L23", "G06F3"])
        self.assertEqual([s.class_id for s in result.removed], ["H01L21"])
        self.assertEqual(result.subclasses, ["H01L"])
        result = analysis.exclude_outlier_subclasses(stats, whole_subclass=True)
        self.assertEqual([s.class_id for s in result.kept], ["G06F3"])

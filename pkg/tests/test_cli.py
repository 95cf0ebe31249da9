from __future__ import annotations

import io
import json
import math
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import pandas

from pyreclass import analysis, model, simulator
from pyreclass.cli.main import main
from pyreclass.estimation import ClassificationCountTable
from pyreclass.model import ModelParams
from pyreclass.validation import planted_stats


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.workdir = Path(self.enterContext(tempfile.TemporaryDirectory()))
        self.enterContext(mock.patch("pyreclass.app.App.setup_logging"))

    def run_main(self, *argv: str) -> tuple[int, str, str]:
        """
        Run the command line, returning exit code, stdout and stderr
        """
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            with mock.patch("sys.stderr", new_callable=io.StringIO) as stderr:
                code = main([str(a) for a in argv])
        return code, stdout.getvalue(), stderr.getvalue()

    def run_json(self, *argv: str) -> dict:
        code, out, err = self.run_main(*argv)
        self.assertEqual(code, 0, err)
        return json.loads(out)


class TestModelCommands(CliTestCase):
    def test_solve(self):
        data = self.run_json("solve", "--alpha", "0.024", "--beta", "0.4", "--w0", "1.25")
        g = data["growth"]["g"]
        self.assertTrue(1.07 < g < 1.08)
        self.assertAlmostEqual(data["predicted"]["T"], 0.4 / (g - 1))
        self.assertAlmostEqual(data["predicted"]["V"], g - 1 - 0.024)
        self.assertAlmostEqual(data["predicted"]["W"], 1.25 * (g - 1) / 0.024)
        self.assertEqual(data["manifest"]["command"], "solve")
        self.assertEqual(data["manifest"]["parameters"]["alpha"], 0.024)

    def test_solve_pure_triggering(self):
        data = self.run_json("solve", "--alpha", "0.05", "--beta", "0")
        self.assertEqual(data["growth"]["g"], 1.05)
        self.assertEqual(data["predicted"]["T"], 0.0)
        self.assertIsNone(data["predicted"]["W"])

    def test_solve_out(self):
        out = self.workdir / "solve.json"
        self.run_json("solve", "--alpha", "0.05", "--beta", "0.5", "--out", out)
        with out.open() as fd:
            self.assertAlmostEqual(json.load(fd)["growth"]["g"], 1.142, places=3)
        self.assertTrue((self.workdir / "solve.json.manifest.json").exists())

    def test_invalid(self):
        code, _, err = self.run_main("solve", "--alpha", "1.5", "--beta", "0.4")
        self.assertEqual(code, 1)
        self.assertIn("alpha", err)
        code, _, err = self.run_main("solve", "--alpha", "0.05")
        self.assertEqual(code, 1)
        self.assertIn("--beta", err)
        code, _, _ = self.run_main("solve", "--alpha", "x")
        self.assertEqual(code, 1)
        code, _, _ = self.run_main("frobnicate")
        self.assertEqual(code, 1)

    def test_config(self):
        config = self.workdir / "config.yaml"
        config.write_text("defaults:\n  alpha: 0.05\ncommands:\n  solve:\n    beta: 0\n    colour: red\n")
        data = self.run_json("--config", config, "solve")
        self.assertEqual(data["growth"]["g"], 1.05)
        # The command line wins over the configuration
        data = self.run_json("--config", config, "solve", "--beta", "0.5")
        self.assertAlmostEqual(data["growth"]["g"], 1.142, places=3)
        code, _, _ = self.run_main("--config", self.workdir / "missing.yaml", "solve")
        self.assertEqual(code, 3)

    def test_simulate(self):
        out = self.workdir / "cohorts.csv"
        totals = self.workdir / "totals.csv"
        code, _, err = self.run_main(
            "simulate", "--alpha", "0.05", "--beta", "0.5", "--horizon", "10", "--out", out, "--totals", totals)
        self.assertEqual(code, 0, err)
        frame = pandas.read_csv(out)
        self.assertEqual(len(frame), 66)
        matrix = simulator.CohortMatrix.from_frame(frame, params=ModelParams(0.05, 0.5))
        self.assertTrue(math.isclose(matrix.total(10), model.exact_total(ModelParams(0.05, 0.5), 10), rel_tol=1e-12))
        frame = pandas.read_csv(totals)
        self.assertEqual(list(frame.columns), ["t", "total", "reclassified"])
        self.assertTrue(math.isnan(frame["reclassified"].iloc[-1]))

    def test_simulate_failure_removes_outputs(self):
        out = self.workdir / "cohorts.csv"
        code, _, _ = self.run_main(
            "simulate", "--alpha", "0.05", "--beta", "0.5", "--horizon", "10", "--out", out,
            "--totals", self.workdir / "missing" / "totals.csv")
        self.assertEqual(code, 3)
        self.assertEqual(list(self.workdir.iterdir()), [])

    def test_exact_total(self):
        out = self.workdir / "exact.csv"
        code, _, err = self.run_main("exact-total", "--alpha", "0.05", "--beta", "0", "--horizon", "20", "--out", out)
        self.assertEqual(code, 0, err)
        frame = pandas.read_csv(out)
        self.assertAlmostEqual(frame["total"].iloc[20], 1.05 ** 20)

    def test_events_and_fit(self):
        events = self.workdir / "events.csv"
        code, _, err = self.run_main(
            "events", "--alpha", "0.025", "--beta", "0.4", "--horizon", "80",
            "--window", "60:63", "--window", "70:73", "--out", events)
        self.assertEqual(code, 0, err)
        data = self.run_json("fit-beta", "--in", events)
        self.assertLess(abs(data["fit"]["beta_hat"] / 0.4 - 1), 0.05)
        self.assertEqual(data["manifest"]["parameters"]["min_lag"], 15)
        data = self.run_json("fit-beta", "--in", events, "--compounded")
        self.assertAlmostEqual(data["fit"]["beta_hat"], 0.4, places=6)
        self.assertEqual(data["manifest"]["inputs"], {"input": str(events)})


class TestDataCommands(CliTestCase):
    def test_simulated_editions(self):
        editions = self.workdir / "editions"
        code, _, err = self.run_main(
            "fixtures", "--kind", "simulated", "--alpha", "0.025", "--beta", "0.4",
            "--window", "60", "63", "--min-lag", "15", "--out", editions)
        self.assertEqual(code, 0, err)
        diff = self.workdir / "diff.csv"
        rates = self.workdir / "rates.csv"
        data = self.run_json("diff", "--manifest", editions / "manifest.yaml", "--out", diff, "--rates", rates)
        self.assertEqual(data["earlier"], "60")
        self.assertEqual(data["later"], "63")
        data = self.run_json("fit-beta", "--in", rates, "--min-lag", "15")
        self.assertLess(abs(data["fit"]["beta_hat"] / 0.4 - 1), 0.05)

        rates2 = self.workdir / "rates2.csv"
        data = self.run_json("rates", "--in", diff, "--window", "60:63", "--out", rates2)
        self.assertEqual(data["skipped"], [])
        self.assertTrue(pandas.read_csv(rates).equals(pandas.read_csv(rates2)))

    def test_diff_sizes(self):
        editions = self.workdir / "editions"
        code, _, err = self.run_main("fixtures", "--kind", "proportional", "--classes", "20", "--out", editions)
        self.assertEqual(code, 0, err)
        sizes = self.workdir / "sizes.csv"
        data = self.run_json(
            "diff", "--earlier", editions / "2013.csv", "--later", editions / "2016.csv",
            "--out", self.workdir / "diff.csv", "--sizes", sizes)
        table = pandas.read_csv(sizes)
        self.assertEqual(len(table), 21)
        # The donor subclass has no additions, so it is left out of the fit
        self.assertEqual(data["size_scaling"]["n_classes"], 20)
        self.assertAlmostEqual(data["size_scaling"]["slope"], 1.0)
        self.assertAlmostEqual(data["size_scaling"]["constant"], 0.05)

    def test_reclassification_fixture(self):
        editions = self.workdir / "editions"
        code, _, err = self.run_main("fixtures", "--seed", "3", "--families", "300", "--out", editions)
        self.assertEqual(code, 0, err)
        diff = self.workdir / "diff.csv"
        self.run_json("diff", "--manifest", editions / "manifest.yaml", "--out", diff)
        self.assertTrue(pandas.read_csv(diff).equals(pandas.read_csv(editions / "plan.csv")))

    def test_diff_arguments(self):
        code, _, err = self.run_main("diff", "--out", self.workdir / "diff.csv")
        self.assertEqual(code, 1)
        manifest = self.workdir / "manifest.yaml"
        manifest.write_text("a: a.csv\nb: b.csv\nc: c.csv\n")
        code, _, err = self.run_main("diff", "--manifest", manifest, "--out", self.workdir / "diff.csv")
        self.assertEqual(code, 1)
        self.assertIn("--labels", err)
        code, _, err = self.run_main(
            "diff", "--manifest", manifest, "--labels", "a", "b", "--out", self.workdir / "diff.csv")
        self.assertEqual(code, 3)

    def test_diff_without_common_families(self):
        earlier = self.workdir / "2013.csv"
        later = self.workdir / "2016.csv"
        out = self.workdir / "diff.csv"
        for earlier_text, later_text in (
                ("", ""),
                ("family_id,filing_year,codes\nF1,2000,A01B1/00\n", "family_id,filing_year,codes\nF2,2000,H01L1/00\n")):
            with self.subTest(earlier=earlier_text, later=later_text):
                earlier.write_text(earlier_text)
                later.write_text(later_text)
                data = self.run_json("diff", "--earlier", earlier, "--later", later, "--out", out)
                self.assertEqual(data["families_compared"], 0)
                self.assertIsNone(data["reclass_proportion"])
                self.assertEqual(len(pandas.read_csv(out)), 0)

    def test_counts_and_alpha(self):
        params = ModelParams(0.025, 0.4)
        matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=80))
        counts = self.workdir / "counts.csv"
        ClassificationCountTable.from_matrix(matrix).to_frame().to_csv(counts, index=False)
        data = self.run_json(
            "estimate-alpha", "--in", counts, "--beta", "0.4", "--year", "60", "--year", "70",
            "--full-depth", "--form", "exact", "--lagged", "--growth-window", "40:75")
        estimates = data["estimates"]
        self.assertEqual([e["year"] for e in estimates], [60, 70])
        for e in estimates:
            self.assertTrue(math.isclose(e["alpha_hat"], 0.025, rel_tol=1e-9))
        self.assertLess(abs(data["growth"]["g_hat"] - model.growth_factor(params).g), 0.01)
        code, _, _ = self.run_main("estimate-alpha", "--in", counts, "--beta", "0.4")
        self.assertEqual(code, 1)

    def test_counts(self):
        snapshot = self.workdir / "2016.csv"
        snapshot.write_text(
            "family_id,filing_year,codes\n"
            "F1,2000,A01B1/00;B60L1/00\n"
            "F2,2000,H01L21/02\n"
            "F3,2001,G06F1/00\n")
        counts = self.workdir / "counts.csv"
        code, _, err = self.run_main("counts", "--snapshot", snapshot, "--out", counts)
        self.assertEqual(code, 0, err)
        frame = pandas.read_csv(counts)
        self.assertEqual(list(frame["classifications"]), [3.0, 1.0])
        self.assertEqual(list(frame["observation_year"]), [2016, 2016])
        self.assertEqual(list(frame["unique_families"]), [2.0, 1.0])


class TestAnalysisCommands(CliTestCase):
    def test_panel_and_groups(self):
        rows = []
        for year in range(2000, 2010):
            for i in range(2 ** (year - 2000)):
                rows.append((f"H{year}-{i}", year, "H01L21/02;H01L21/04" if i == 0 else "H01L21/02"))
            rows.append((f"G{year}", year, "G06F1/00"))
        snapshot = self.workdir / "2016.csv"
        pandas.DataFrame(rows, columns=["family_id", "filing_year", "codes"]).to_csv(snapshot, index=False)

        panel = self.workdir / "panel.csv"
        code, _, err = self.run_main("panel", "--snapshot", snapshot, "--out", panel)
        self.assertEqual(code, 0, err)
        groups = self.workdir / "groups.csv"
        code, _, err = self.run_main(
            "groups", "--panel", panel, "--years", "2000:2009", "--recent", "2009", "--out", groups)
        self.assertEqual(code, 0, err)
        stats = analysis.stats_from_frame(pandas.read_csv(groups))
        self.assertEqual([s.class_id for s in stats], ["G06F", "H01L"])
        self.assertAlmostEqual(stats[1].g_k, 2.0)
        self.assertEqual(stats[1].log_recent[0][0], 2009)

        code, _, err = self.run_main("groups", "--panel", panel, "--years", "2020:2021", "--out", groups)
        self.assertEqual(code, 1)

    def test_ecosystem(self):
        groups = self.workdir / "groups.csv"
        argv = ["ecosystem", "--alpha", "0.025", "--w0", "1.25", "--horizon", "150", "--years", "110:140"]
        for beta in (0.2, 0.3, 0.4, 0.5, 0.6):
            argv += ["--beta", str(beta)]
        code, _, err = self.run_main(*argv, "--out", groups)
        self.assertEqual(code, 0, err)
        frame = pandas.read_csv(groups)
        self.assertEqual(list(frame["class_id"]), ["H00X", "H01X", "H02X", "H03X", "H04X"])
        self.assertTrue((frame["g_k"].diff().dropna() > 0).all())

    def test_regress(self):
        groups = self.workdir / "groups.csv"
        analysis.stats_to_frame(planted_stats(0.01)).to_csv(groups, index=False)
        correlations = self.workdir / "correlations.csv"
        data = self.run_json("regress", "--in", groups, "--correlations", correlations)
        self.assertEqual(sorted(data["regressions"]), ["controls", "fractional", "year_avg"])
        controls = data["regressions"]["controls"]
        self.assertEqual(sorted(controls), ["A", "B", "G", "H"])
        coefficients = {c["name"]: c for c in controls["A"]["coefficients"]}
        self.assertAlmostEqual(coefficients["class_per_family"]["coef"], 0.01)
        self.assertEqual(list(pandas.read_csv(correlations)["section"]), ["A", "B", "G", "H"])

    def test_regress_too_few_groups(self):
        groups = self.workdir / "groups.csv"
        stats = planted_stats(0.01, sections=("A",), groups=20) + planted_stats(0.01, sections=("B",), groups=5)
        analysis.stats_to_frame(stats).to_csv(groups, index=False)
        code, _, err = self.run_main("regress", "--in", groups, "--spec", "controls")
        self.assertEqual(code, 1)
        self.assertIn("section B", err)
        data = self.run_json("regress", "--in", groups, "--spec", "year_avg", "--lenient")
        self.assertEqual(list(data["regressions"]["year_avg"]), ["A"])


class TestValidateCommand(CliTestCase):
    def test_validate(self):
        code, out, err = self.run_main("validate", "--check", "reclass_proportion_value")
        self.assertEqual(code, 0, err)
        self.assertIn("1/1 checks passed", out)
        code, out, _ = self.run_main("validate", "--list")
        self.assertEqual(code, 0)
        self.assertIn("growth_factor_interval:", out)
        code, _, _ = self.run_main("validate", "--check", "no_such_check")
        self.assertEqual(code, 1)

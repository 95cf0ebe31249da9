from __future__ import annotations

import unittest

from pyreclass import validation
from pyreclass.errors import ValidationError


class TestChecks(unittest.TestCase):
    def test_all_checks_pass(self):
        for check in validation.CHECKS:
            with self.subTest(check=check.__name__):
                passed, detail = check()
                self.assertTrue(passed, detail)

    def test_run_checks(self):
        results = validation.run_checks(["reclass_proportion_value", "decline_time_values"])
        self.assertEqual([r.name for r in results], ["reclass_proportion_value", "decline_time_values"])
        self.assertTrue(validation.all_passed(results))
        table = validation.format_table(results)
        self.assertIn("2/2 checks passed", table)
        with self.assertRaises(ValidationError):
            validation.run_checks(["no_such_check"])

    def test_failures_are_reported(self):
        def broken() -> tuple[bool, str]:
            """
            Always raises
            """
            raise ValueError("boom")

        validation.CHECKS.append(broken)
        self.addCleanup(validation.CHECKS.remove, broken)
        results = validation.run_checks(["broken"])
        self.assertFalse(results[0].passed)
        self.assertEqual(results[0].detail, "ValueError: boom")
        self.assertFalse(validation.all_passed(results))
        self.assertFalse(validation.all_passed([]))
        self.assertEqual(validation.describe(broken), "Always raises")

from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

import yaml

from pyreclass import fixtures
from pyreclass.errors import ValidationError


class TestFixtures(unittest.TestCase):
    def test_reclassification_deterministic(self):
        a = fixtures.reclassification_fixture(seed=7, families=100)
        b = fixtures.reclassification_fixture(seed=7, families=100)
        self.assertEqual(a[0].records, b[0].records)
        self.assertEqual(a[2].tallies, b[2].tallies)
        c = fixtures.reclassification_fixture(seed=8, families=100)
        self.assertNotEqual(a[0].records, c[0].records)

    def test_reclassification_presence(self):
        earlier, later, plan = fixtures.reclassification_fixture(seed=0, families=1000)
        self.assertTrue(earlier.records.keys() - later.records.keys())
        self.assertTrue(later.records.keys() - earlier.records.keys())
        for filing_year, codes in earlier.records.values():
            self.assertTrue(1990 <= filing_year <= 2010)
            self.assertTrue(codes)
        with self.assertRaises(ValidationError):
            fixtures.reclassification_fixture(subclasses=["A01B"])

    def test_proportional(self):
        earlier, later = fixtures.proportional_fixture({"A01B": 40, "G06F": 20}, rate=0.05)
        self.assertEqual(len(earlier), 40 + 20 + 2 + 1)
        self.assertEqual(earlier.records.keys(), later.records.keys())
        with self.assertRaises(ValidationError):
            fixtures.proportional_fixture({"A01B": 30}, rate=0.05)
        with self.assertRaises(ValidationError):
            fixtures.proportional_fixture({fixtures.DONOR_SUBCLASS: 20})

    def test_rates(self):
        with self.assertRaises(ValidationError):
            fixtures.rate_fixture({2000: 0.9}, families_per_year=10)
        with self.assertRaises(ValidationError):
            fixtures.rate_fixture({2000: 0.1}, subclasses=["A01B", "G06F"])

    def test_subclass_names(self):
        names = fixtures.subclass_names(20)
        self.assertEqual(len(set(names)), 20)
        self.assertEqual(names[:2], ["A00A", "B00A"])
        self.assertEqual(names[8], "A01A")

    def test_write_editions(self):
        workdir = Path(self.enterContext(tempfile.TemporaryDirectory()))
        earlier, later, _ = fixtures.reclassification_fixture(seed=1, families=50)
        manifest = fixtures.write_editions([earlier, later], workdir / "out")
        self.assertEqual(manifest, workdir / "out" / "manifest.yaml")
        with manifest.open() as fd:
            self.assertEqual(yaml.load(fd, Loader=yaml.SafeLoader), {"2013": "2013.csv", "2016": "2016.csv"})
        self.assertTrue((workdir / "out" / "2013.csv").exists())

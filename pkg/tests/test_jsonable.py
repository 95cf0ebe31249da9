from __future__ import annotations

import json
import math
import unittest

import numpy

from pyreclass.estimation import AlphaEstimate, BetaFit
from pyreclass.jsonable import Jsonable, to_jsonable
from pyreclass.model import GrowthSolution


class TestJsonable(unittest.TestCase):
    def assertSerializes(self, obj: Jsonable) -> dict:
        buf = json.dumps(to_jsonable(obj), allow_nan=False)
        data = json.loads(buf)
        self.assertEqual(data["__module__"], obj.__class__.__module__)
        self.assertEqual(data["__class__"], obj.__class__.__name__)
        return data

    def test_growth_solution(self):
        data = self.assertSerializes(GrowthSolution(g=1.05, n0=1.0, residual=0.0, iterations=3))
        self.assertEqual(data["g"], 1.05)
        self.assertEqual(data["iterations"], 3)

    def test_beta_fit(self):
        data = self.assertSerializes(BetaFit(
            beta_hat=numpy.float64(0.4), sum_squared_residual=0.0, n_samples=numpy.int64(12)))
        self.assertEqual(data["beta_hat"], 0.4)
        self.assertEqual(data["n_samples"], 12)

    def test_alpha_estimate(self):
        data = self.assertSerializes(AlphaEstimate(alpha_hat=1.5, year=2000, w0_hat=0.5))
        self.assertEqual(data["flags"], ["alpha outside (0, 1)", "w0 below 1"])

    def test_values(self):
        self.assertEqual(
            to_jsonable({"a": numpy.array([1.0, math.inf]), 2: (numpy.int32(3), math.nan)}),
            {"a": [1.0, None], "2": [3, None]})


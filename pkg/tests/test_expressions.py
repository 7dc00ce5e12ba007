"""Analytic expression whitelist: evaluation and validation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from stharm.expressions import AnalyticExpr, ExpressionError
from stharm.grid import Grid

RNG = np.random.default_rng(7)
PTS = RNG.uniform(0.2, 0.9, size=(40, 3))
X, Y, Z = PTS.T


@pytest.mark.parametrize("spec,fn", [
    ({"family": "constant", "value": 2.5}, lambda x, y, z: 2.5),
    ({"family": "affine", "coeffs": [1, -2, 3], "offset": 0.5},
     lambda x, y, z: x - 2 * y + 3 * z + 0.5),
    ({"family": "sine_product", "freq": [math.pi, 2.0, 1.0]},
     lambda x, y, z: np.sin(math.pi * x) * np.sin(2 * y) * np.sin(z)),
    ({"family": "exp_profile", "rate": 1.0},
     lambda x, y, z: np.expm1(x) / np.expm1(1.0)),
    ({"family": "exp_profile", "rate": 2.0, "axis": 1, "start": 0.2,
      "length": 0.5},
     lambda x, y, z: np.expm1(2 * (y - 0.2)) / np.expm1(1.0)),
    ({"family": "radial_sq", "center": [0.5, 0.5, 0.5]},
     lambda x, y, z: (x - .5)**2 + (y - .5)**2 + (z - .5)**2),
    ({"family": "inverse_radius", "coeff": 0.5, "offset": 1.0},
     lambda x, y, z: 1.0 + 0.5 / np.sqrt(x**2 + y**2 + z**2)),
    ({"family": "radial_quadratic", "coeff": 0.1, "offset": 1.0,
      "center": [0.5, 0.5, 0.5]},
     lambda x, y, z: 1.0 + 0.1 * ((x - .5)**2 + (y - .5)**2 + (z - .5)**2)),
])
def test_families_match_closed_forms(spec, fn):
    expr = AnalyticExpr.from_config(spec)
    np.testing.assert_allclose(expr(X, Y, Z), fn(X, Y, Z), rtol=1e-13)


def test_plain_number_becomes_constant():
    expr = AnalyticExpr.from_config(0.3)
    assert expr.family == "constant"
    np.testing.assert_allclose(expr(X, Y, Z), 0.3)


def test_evaluate_on_grid_broadcasts():
    g = Grid.from_box((9, 9, 9), [[0, 1]] * 3)
    vals = AnalyticExpr.from_config(1.5).evaluate_on(g)
    assert vals.shape == g.dims
    np.testing.assert_allclose(vals, 1.5)


def test_round_trip_config():
    spec = {"family": "sine_product", "freq": [1.0, 2.0, 3.0]}
    expr = AnalyticExpr.from_config(spec)
    assert AnalyticExpr.from_config(expr.to_config()) == expr


@pytest.mark.parametrize("bad", [
    {"family": "polynomial", "degree": 3},             # unknown family
    {"family": "sine_product"},                        # missing freq
    {"family": "constant", "value": 1.0, "rate": 2.0}, # foreign parameter
    {"family": "affine", "coeffs": [1, 2]},            # wrong vector length
    {"family": "exp_profile", "rate": 1.0, "axis": 5}, # axis out of range
    "sin(x)",                                          # free-form string
])
def test_invalid_specs_rejected(bad):
    with pytest.raises(ExpressionError):
        AnalyticExpr.from_config(bad)

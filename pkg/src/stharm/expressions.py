"""Whitelisted analytic expressions for configs.

Scenario configs never embed free-form formulas; they pick from this small
family set with numeric parameters.  Each family maps to a closed-form numpy
evaluator, keeping runs reproducible and configs machine-checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ExpressionError(ValueError):
    """Unknown family or malformed parameters."""


@dataclass(frozen=True)
class AnalyticExpr:
    """A named closed-form function of (x, y, z) with fixed parameters."""

    family: str
    params: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return _EVALUATORS[self.family](self.params, x, y, z)

    def evaluate_on(self, grid) -> np.ndarray:
        x, yv, zv = grid.coords()
        vals = self(x, yv, zv)
        return np.broadcast_to(np.asarray(vals, dtype=np.float64), grid.dims).copy()

    def to_config(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_config(cls, spec: dict | float | int) -> "AnalyticExpr":
        if isinstance(spec, (int, float)):
            return cls("constant", {"value": float(spec)})
        if not isinstance(spec, dict):
            raise ExpressionError(f"expression spec must be a number or mapping, got {spec!r}")
        spec = dict(spec)
        family = spec.pop("family", None)
        if family not in _EVALUATORS:
            raise ExpressionError(
                f"unknown expression family {family!r}; known families: {sorted(_EVALUATORS)}")
        params = _normalize_params(family, spec)
        return cls(family, params)


def _center(params, x, y, z):
    cx, cy, cz = params.get("center", (0.0, 0.0, 0.0))
    return x - cx, y - cy, z - cz


def _eval_constant(p, x, y, z):
    return np.full(np.broadcast(x, y, z).shape, p["value"])


def _eval_affine(p, x, y, z):
    a, b, c = p["coeffs"]
    return a * x + b * y + c * z + p.get("offset", 0.0)


def _eval_sine_product(p, x, y, z):
    kx, ky, kz = p["freq"]
    return p.get("amplitude", 1.0) * np.sin(kx * x) * np.sin(ky * y) * np.sin(kz * z)


def _eval_exp_profile(p, x, y, z):
    # (exp(a s) - 1) / (exp(a L) - 1) along one axis, rescaled so the profile
    # runs from 0 at s0 to 1 at s0 + L; the closed-form solution of
    # f'' = a f' with those endpoint values.
    axis = p.get("axis", 0)
    s = (x, y, z)[axis]
    a = p["rate"]
    s0 = p.get("start", 0.0)
    length = p.get("length", 1.0)
    return np.expm1(a * (s - s0)) / np.expm1(a * length)


def _eval_radial_sq(p, x, y, z):
    dx, dy, dz = _center(p, x, y, z)
    return dx * dx + dy * dy + dz * dz


def _eval_inverse_radius(p, x, y, z):
    dx, dy, dz = _center(p, x, y, z)
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    return p.get("offset", 1.0) + p["coeff"] / r


def _eval_radial_quadratic(p, x, y, z):
    dx, dy, dz = _center(p, x, y, z)
    return p.get("offset", 1.0) + p["coeff"] * (dx * dx + dy * dy + dz * dz)


_EVALUATORS: dict[str, Callable] = {
    "constant": _eval_constant,
    "affine": _eval_affine,
    "sine_product": _eval_sine_product,
    "exp_profile": _eval_exp_profile,
    "radial_sq": _eval_radial_sq,
    "inverse_radius": _eval_inverse_radius,
    "radial_quadratic": _eval_radial_quadratic,
}

_REQUIRED: dict[str, tuple] = {
    "constant": ("value",),
    "affine": ("coeffs",),
    "sine_product": ("freq",),
    "exp_profile": ("rate",),
    "radial_sq": (),
    "inverse_radius": ("coeff",),
    "radial_quadratic": ("coeff",),
}

_OPTIONAL: dict[str, tuple] = {
    "constant": (),
    "affine": ("offset",),
    "sine_product": ("amplitude",),
    "exp_profile": ("axis", "start", "length"),
    "radial_sq": ("center",),
    "inverse_radius": ("center", "offset"),
    "radial_quadratic": ("center", "offset"),
}

_VECTOR_PARAMS = {"coeffs", "freq", "center"}


def _normalize_params(family: str, given: dict) -> dict:
    required = _REQUIRED[family]
    allowed = set(required) | set(_OPTIONAL[family])
    unknown = set(given) - allowed
    if unknown:
        raise ExpressionError(
            f"family {family!r} does not accept parameter(s) {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}")
    missing = [k for k in required if k not in given]
    if missing:
        raise ExpressionError(f"family {family!r} requires parameter(s) {missing}")
    params = {}
    for key, value in given.items():
        if key in _VECTOR_PARAMS:
            value = tuple(float(v) for v in value)
            if len(value) != 3:
                raise ExpressionError(f"parameter {key!r} must have 3 entries, got {value}")
        elif key == "axis":
            value = int(value)
            if value not in (0, 1, 2):
                raise ExpressionError(f"axis must be 0, 1 or 2, got {value}")
        else:
            value = float(value)
        params[key] = value
    return params


def constant(value: float) -> AnalyticExpr:
    return AnalyticExpr("constant", {"value": float(value)})


def affine(coeffs, offset: float = 0.0) -> AnalyticExpr:
    return AnalyticExpr("affine", {"coeffs": tuple(float(c) for c in coeffs),
                                   "offset": float(offset)})

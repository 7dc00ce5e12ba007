"""Scenario catalog and configuration handling.

A scenario is a JSON-able dict describing grid, metric, initial data (p, h),
how to obtain u (solve with boundary conditions, or a manufactured closed
form), and which checks to run.  ``validate_config`` normalizes a raw dict
and reports structural errors with the offending key path; ``build_scenario``
turns a validated config into live objects ready for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expressions import AnalyticExpr, ExpressionError
from .fields import InitialDataFields, make_initial_data
from .grid import FACES, Grid, ScalarField
from .metric import (MetricData, metric_conformal, metric_constant,
                     metric_diagonal, metric_flat)
from .pde import (BoundaryCondition, BoundarySpec, SolveResult, SolverConfig,
                  solve)
from .verify import DEFAULT_TOLERANCES

CHECK_NAMES = ("main", "dirichlet", "neumann_gradient", "neumann_boundary",
               "identities", "coarea", "conditions", "reference")

METRIC_FAMILIES = ("flat", "conformal", "diagonal", "constant")
P_FAMILIES = ("zero", "trace", "table")

_SOLVER_KEYS = {"delta_schedule", "picard_tol", "max_picard_per_stage",
                "damping", "linear_tol", "linear_maxiter"}


class ConfigError(ValueError):
    """Invalid scenario configuration; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# ============================================================================
# Validation
# ============================================================================


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def _expect_mapping(value, path: str) -> dict:
    _require(isinstance(value, dict), path, f"expected an object, got {type(value).__name__}")
    return value


def _expect_number(value, path: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             path, f"expected a number, got {value!r}")
    return float(value)


def _check_keys(mapping: dict, path: str, allowed: set, required: set = frozenset()):
    unknown = set(mapping) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}" if path else key,
                          f"unknown key (allowed: {sorted(allowed)})")
    missing = required - set(mapping)
    if missing:
        key = sorted(missing)[0]
        raise ConfigError(f"{path}.{key}" if path else key, "required key missing")


def _validate_expression(spec, path: str) -> dict | float:
    """A number, or an expression object {family, ...params}."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    mapping = _expect_mapping(spec, path)
    _require("family" in mapping, f"{path}.family", "required key missing")
    try:
        expr = AnalyticExpr.from_config(mapping)
    except ExpressionError as exc:
        sub = ".family" if str(exc).startswith("unknown expression family") else ""
        raise ConfigError(f"{path}{sub}", str(exc)) from exc
    return expr.to_config()


def _validate_grid(spec, path: str) -> dict:
    mapping = _expect_mapping(spec, path)
    _check_keys(mapping, path, {"dims", "box"}, {"dims", "box"})
    dims = mapping["dims"]
    _require(isinstance(dims, (list, tuple)) and len(dims) == 3,
             f"{path}.dims", "expected three integers")
    dims = [int(d) for d in dims]
    for i, d in enumerate(dims):
        _require(d >= 5, f"{path}.dims[{i}]", f"dimension must be >= 5, got {d}")
    box = mapping["box"]
    _require(isinstance(box, (list, tuple)) and len(box) == 3,
             f"{path}.box", "expected three [lo, hi] pairs")
    norm_box = []
    for i, pair in enumerate(box):
        _require(isinstance(pair, (list, tuple)) and len(pair) == 2,
                 f"{path}.box[{i}]", "expected [lo, hi]")
        lo = _expect_number(pair[0], f"{path}.box[{i}][0]")
        hi = _expect_number(pair[1], f"{path}.box[{i}][1]")
        _require(hi > lo, f"{path}.box[{i}]", f"upper bound must exceed lower, got [{lo}, {hi}]")
        norm_box.append([lo, hi])
    return {"dims": dims, "box": norm_box}


def _validate_metric(spec, path: str) -> dict:
    mapping = _expect_mapping(spec, path)
    _require("family" in mapping, f"{path}.family", "required key missing")
    family = mapping["family"]
    _require(family in METRIC_FAMILIES, f"{path}.family",
             f"unknown metric family {family!r} (expected one of {METRIC_FAMILIES})")
    out = {"family": family}
    if family == "flat":
        _check_keys(mapping, path, {"family"})
    elif family == "conformal":
        _check_keys(mapping, path, {"family", "phi"}, {"phi"})
        out["phi"] = _validate_expression(mapping["phi"], f"{path}.phi")
    elif family == "diagonal":
        _check_keys(mapping, path, {"family", "entries"}, {"entries"})
        entries = mapping["entries"]
        _require(isinstance(entries, (list, tuple)) and len(entries) == 3,
                 f"{path}.entries", "expected three diagonal entries")
        out["entries"] = [_validate_expression(e, f"{path}.entries[{i}]")
                          for i, e in enumerate(entries)]
    else:                                          # constant
        _check_keys(mapping, path, {"family", "components"}, {"components"})
        comps = mapping["components"]
        _require(isinstance(comps, (list, tuple)) and len(comps) == 6,
                 f"{path}.components",
                 "expected six components (xx, xy, xz, yy, yz, zz)")
        out["components"] = [_expect_number(c, f"{path}.components[{i}]")
                             for i, c in enumerate(comps)]
    return out


def _validate_p(spec, path: str) -> dict:
    mapping = _expect_mapping(spec, path)
    _require("family" in mapping, f"{path}.family", "required key missing")
    family = mapping["family"]
    _require(family in P_FAMILIES, f"{path}.family",
             f"unknown p family {family!r} (expected one of {P_FAMILIES})")
    out = {"family": family}
    if family == "zero":
        _check_keys(mapping, path, {"family"})
    elif family == "trace":
        _check_keys(mapping, path, {"family", "c"}, {"c"})
        out["c"] = _expect_number(mapping["c"], f"{path}.c")
    else:                                          # table
        _check_keys(mapping, path, {"family", "components"}, {"components"})
        comps = mapping["components"]
        _require(isinstance(comps, (list, tuple)) and len(comps) == 6,
                 f"{path}.components",
                 "expected six components (xx, xy, xz, yy, yz, zz)")
        out["components"] = [_validate_expression(c, f"{path}.components[{i}]")
                             for i, c in enumerate(comps)]
    return out


def _validate_solution(spec, path: str) -> dict:
    mapping = _expect_mapping(spec, path)
    _require("mode" in mapping, f"{path}.mode", "required key missing")
    mode = mapping["mode"]
    _require(mode in ("solve", "manufactured"), f"{path}.mode",
             f"unknown mode {mode!r} (expected 'solve' or 'manufactured')")
    out = {"mode": mode}
    if mode == "manufactured":
        _check_keys(mapping, path, {"mode", "u"}, {"u"})
        out["u"] = _validate_expression(mapping["u"], f"{path}.u")
        _require(not isinstance(out["u"], float), f"{path}.u",
                 "manufactured u must be an expression, not a constant")
        return out
    _check_keys(mapping, path, {"mode", "boundary", "solver", "reference"},
                {"boundary"})
    boundary = _expect_mapping(mapping["boundary"], f"{path}.boundary")
    _check_keys(boundary, f"{path}.boundary", set(FACES), set(FACES))
    out_bc = {}
    for face in FACES:
        bc = _expect_mapping(boundary[face], f"{path}.boundary.{face}")
        _require("kind" in bc, f"{path}.boundary.{face}.kind", "required key missing")
        kind = bc["kind"]
        _require(kind in ("dirichlet", "neumann"), f"{path}.boundary.{face}.kind",
                 f"unknown kind {kind!r} (expected 'dirichlet' or 'neumann')")
        if kind == "dirichlet":
            _check_keys(bc, f"{path}.boundary.{face}", {"kind", "value"}, {"value"})
            out_bc[face] = {"kind": "dirichlet",
                            "value": _validate_expression(
                                bc["value"], f"{path}.boundary.{face}.value")}
        else:
            _check_keys(bc, f"{path}.boundary.{face}", {"kind"})
            out_bc[face] = {"kind": "neumann"}
    out["boundary"] = out_bc
    if "solver" in mapping:
        solver = _expect_mapping(mapping["solver"], f"{path}.solver")
        _check_keys(solver, f"{path}.solver", _SOLVER_KEYS)
        norm = {}
        if "delta_schedule" in solver:
            sched = solver["delta_schedule"]
            _require(isinstance(sched, (list, tuple)) and len(sched) >= 1,
                     f"{path}.solver.delta_schedule", "expected a nonempty list")
            norm["delta_schedule"] = [
                _expect_number(v, f"{path}.solver.delta_schedule[{i}]")
                for i, v in enumerate(sched)]
        for key in ("picard_tol", "damping", "linear_tol"):
            if key in solver:
                norm[key] = _expect_number(solver[key], f"{path}.solver.{key}")
        for key in ("max_picard_per_stage", "linear_maxiter"):
            if key in solver:
                norm[key] = int(_expect_number(solver[key], f"{path}.solver.{key}"))
        out["solver"] = norm
    if "reference" in mapping:
        out["reference"] = _validate_expression(mapping["reference"],
                                                f"{path}.reference")
    return out


def _validate_verification(spec, path: str) -> dict:
    mapping = _expect_mapping(spec, path)
    allowed = {"n_levels", "epsilon_reg", "level_range", "eps_neq0",
               "tolerances", "checks", "required"}
    _check_keys(mapping, path, allowed)
    out = {"n_levels": 64, "epsilon_reg": None, "level_range": None,
           "eps_neq0": None, "tolerances": {}, "checks": None, "required": []}
    if "n_levels" in mapping:
        out["n_levels"] = int(_expect_number(mapping["n_levels"], f"{path}.n_levels"))
        _require(out["n_levels"] >= 2, f"{path}.n_levels",
                 f"need at least 2 levels, got {out['n_levels']}")
    for key in ("epsilon_reg", "eps_neq0"):
        if mapping.get(key) is not None:
            out[key] = _expect_number(mapping[key], f"{path}.{key}")
    if mapping.get("level_range") is not None:
        rng = mapping["level_range"]
        _require(isinstance(rng, (list, tuple)) and len(rng) == 2,
                 f"{path}.level_range", "expected [lo, hi]")
        lo = _expect_number(rng[0], f"{path}.level_range[0]")
        hi = _expect_number(rng[1], f"{path}.level_range[1]")
        _require(hi > lo, f"{path}.level_range", "upper bound must exceed lower")
        out["level_range"] = [lo, hi]
    if "tolerances" in mapping:
        tols = _expect_mapping(mapping["tolerances"], f"{path}.tolerances")
        for key, value in tols.items():
            _require(key in DEFAULT_TOLERANCES, f"{path}.tolerances.{key}",
                     f"unknown check tolerance {key!r} "
                     f"(known: {sorted(DEFAULT_TOLERANCES)})")
            out["tolerances"][key] = _expect_number(value, f"{path}.tolerances.{key}")
    for key in ("checks", "required"):
        if mapping.get(key) is not None:
            names = mapping[key]
            _require(isinstance(names, (list, tuple)), f"{path}.{key}",
                     "expected a list of check names")
            for i, name in enumerate(names):
                _require(name in CHECK_NAMES, f"{path}.{key}[{i}]",
                         f"unknown check {name!r} (known: {CHECK_NAMES})")
            out[key] = list(names)
    return out


def validate_config(raw: dict) -> dict:
    """Normalize a raw scenario dict; raises ConfigError with a key path."""
    mapping = _expect_mapping(raw, "<config>")
    allowed = {"name", "description", "grid", "metric", "p", "h",
               "solution", "verification", "output"}
    _check_keys(mapping, "", allowed, {"name", "grid", "metric", "p", "h", "solution"})
    _require(isinstance(mapping["name"], str) and mapping["name"],
             "name", "expected a nonempty string")
    out = {
        "name": mapping["name"],
        "description": str(mapping.get("description", "")),
        "grid": _validate_grid(mapping["grid"], "grid"),
        "metric": _validate_metric(mapping["metric"], "metric"),
        "p": _validate_p(mapping["p"], "p"),
        "h": _validate_expression(mapping["h"], "h"),
        "solution": _validate_solution(mapping["solution"], "solution"),
        "verification": _validate_verification(mapping.get("verification", {}),
                                               "verification"),
    }
    if "output" in mapping:
        output = _expect_mapping(mapping["output"], "output")
        _check_keys(output, "output", {"directory"}, {"directory"})
        _require(isinstance(output["directory"], str), "output.directory",
                 "expected a string")
        out["output"] = {"directory": output["directory"]}
    if out["verification"]["checks"] is None:
        out["verification"]["checks"] = _default_checks(out)
    bad = [c for c in out["verification"]["required"]
           if c not in out["verification"]["checks"]]
    _require(not bad, "verification.required",
             f"required check(s) {bad} are not in the scheduled check list")
    return out


def _default_checks(config: dict) -> list:
    checks = ["main", "identities", "coarea", "conditions"]
    sol = config["solution"]
    if sol["mode"] == "solve":
        kinds = {face: sol["boundary"][face]["kind"] for face in FACES}
        if any(k == "dirichlet" for k in kinds.values()):
            checks.append("dirichlet")
        if any(k == "neumann" for k in kinds.values()):
            checks.extend(["neumann_gradient", "neumann_boundary"])
        if "reference" in sol:
            checks.append("reference")
    return checks


# ============================================================================
# Built-in catalog
# ============================================================================

_UNIT_BOX = [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]
_AFFINE_X = {"family": "affine", "coeffs": [1.0, 0.0, 0.0]}
_ALL_DIRICHLET_X = {face: {"kind": "dirichlet", "value": _AFFINE_X}
                    for face in FACES}
_NONLINEAR_SOLVER = {"delta_schedule": [1e-2, 1e-3, 1e-4, 1e-6, 1e-9, 1e-12],
                     "damping": 1.0}


def _builtins() -> dict:
    exp_x = {"family": "exp_profile", "rate": 1.0, "axis": 0,
             "start": 0.0, "length": 1.0}
    catalog = {
        "flat-linear": {
            "description": "Flat metric, vanishing p and h, linear Dirichlet "
                           "data: the equality case of the main inequality.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "zero"},
            "h": 0.0,
            "solution": {"mode": "solve", "boundary": _ALL_DIRICHLET_X},
            "verification": {"required": ["main", "dirichlet", "identities",
                                          "coarea"]},
        },
        "trace-matched": {
            "description": "Pure-trace p = 0.1 g with h = 0.3 tuned so u = x "
                           "stays exact; hand-computable integrals.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "trace", "c": 0.1},
            "h": 0.3,
            "solution": {"mode": "solve", "boundary": _ALL_DIRICHLET_X},
            "verification": {"required": ["main", "dirichlet", "identities",
                                          "coarea"]},
        },
        "quasi-1d-exponential": {
            "description": "Constant h = 1 drives an exponential profile with "
                           "a closed-form reference solution.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "zero"},
            "h": 1.0,
            "solution": {
                "mode": "solve",
                "boundary": {face: {"kind": "dirichlet", "value": exp_x}
                             for face in FACES},
                "solver": dict(_NONLINEAR_SOLVER),
                "reference": exp_x,
            },
            "verification": {"tolerances": {"dirichlet_lemma": 2e-2},
                             "required": ["dirichlet", "identities", "coarea",
                                          "reference"]},
        },
        "radial-spheres": {
            "description": "Manufactured u = |x - c|^2: level sets are round "
                           "spheres with known area and curvatures.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "zero"},
            "h": 0.0,
            "solution": {"mode": "manufactured",
                         "u": {"family": "radial_sq",
                               "center": [0.5, 0.5, 0.5]}},
            "verification": {"level_range": [0.02, 0.24],
                             "required": ["main", "identities", "coarea"]},
        },
        "schwarzschild-slice": {
            "description": "Conformal factor 1 + M/(2r) (M = 1) on a box "
                           "offset from the horizon; scalar-flat slice.",
            "grid": {"dims": [33, 33, 33],
                     "box": [[1.2, 2.2], [-0.5, 0.5], [-0.5, 0.5]]},
            "metric": {"family": "conformal",
                       "phi": {"family": "inverse_radius", "coeff": 0.5,
                               "offset": 1.0, "center": [0.0, 0.0, 0.0]}},
            "p": {"family": "zero"},
            "h": 0.0,
            "solution": {"mode": "solve", "boundary": _ALL_DIRICHLET_X},
            "verification": {"tolerances": {"dirichlet_lemma": 1e-2},
                             "required": ["main", "identities", "coarea"]},
        },
        "conformal-faces": {
            "description": "Curved conformal metric with two Dirichlet and "
                           "four zero-flux faces: exercises every boundary "
                           "lemma with nontrivial face curvature.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "conformal",
                       "phi": {"family": "radial_quadratic", "coeff": 0.1,
                               "offset": 1.0, "center": [0.5, 0.5, 0.5]}},
            "p": {"family": "zero"},
            "h": 0.0,
            "solution": {
                "mode": "solve",
                "boundary": {
                    "xlo": {"kind": "dirichlet", "value": 0.0},
                    "xhi": {"kind": "dirichlet", "value": 1.0},
                    "ylo": {"kind": "neumann"}, "yhi": {"kind": "neumann"},
                    "zlo": {"kind": "neumann"}, "zhi": {"kind": "neumann"},
                },
            },
            "verification": {"tolerances": {"dirichlet_lemma": 5e-3,
                                            "neumann_gradient": 2e-3},
                             "required": ["dirichlet", "neumann_gradient",
                                          "neumann_boundary", "identities",
                                          "coarea"]},
        },
        "manufactured-sine": {
            "description": "Manufactured sine product: closed interior level "
                           "sets and dense critical structure for the "
                           "identity ladder.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "zero"},
            "h": 0.0,
            "solution": {"mode": "manufactured",
                         "u": {"family": "sine_product",
                               "freq": [math.pi, math.pi, math.pi]}},
            "verification": {
                "level_range": [0.05, 0.90],
                "tolerances": {"identity.gradient_pairing": 5e-2,
                               "dirichlet_lemma": 5e-1},
                "checks": ["main", "dirichlet", "identities", "coarea",
                           "conditions"],
                "required": ["dirichlet", "identities", "coarea"],
            },
        },
        "neumann-slab": {
            "description": "Constant h = 0.5 between two Dirichlet walls with "
                           "zero-flux sides; the h-terms dominate the bulk "
                           "integrand here.",
            "grid": {"dims": [33, 33, 33], "box": _UNIT_BOX},
            "metric": {"family": "flat"},
            "p": {"family": "zero"},
            "h": 0.5,
            "solution": {
                "mode": "solve",
                "boundary": {
                    "xlo": {"kind": "dirichlet", "value": 0.0},
                    "xhi": {"kind": "dirichlet", "value": 1.0},
                    "ylo": {"kind": "neumann"}, "yhi": {"kind": "neumann"},
                    "zlo": {"kind": "neumann"}, "zhi": {"kind": "neumann"},
                },
                "solver": dict(_NONLINEAR_SOLVER),
            },
            "verification": {"required": ["dirichlet", "neumann_gradient",
                                          "neumann_boundary", "identities",
                                          "coarea"]},
        },
    }
    for name, cfg in catalog.items():
        cfg["name"] = name
    return catalog


def builtin_names() -> list:
    return list(_builtins())


def builtin_config(name: str) -> dict:
    catalog = _builtins()
    if name not in catalog:
        raise ConfigError("name", f"unknown built-in scenario {name!r} "
                                  f"(known: {sorted(catalog)})")
    return validate_config(catalog[name])


def builtin_catalog() -> list:
    """(name, description) pairs for every built-in scenario."""
    return [(name, cfg["description"]) for name, cfg in _builtins().items()]


# ============================================================================
# Building live objects
# ============================================================================


@dataclass
class Scenario:
    """A validated config realized on a grid, ready for verification."""

    config: dict
    grid: Grid
    metric: MetricData
    idf: InitialDataFields
    u: ScalarField
    solve_result: SolveResult | None = None
    reference: np.ndarray | None = None
    boundary_spec: BoundarySpec | None = None

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def verification(self) -> dict:
        return self.config["verification"]

    @property
    def checks(self) -> list:
        return self.verification["checks"]

    @property
    def required(self) -> list:
        return self.verification["required"]

    @property
    def neumann_faces(self) -> list:
        if self.boundary_spec is None:
            return []
        return list(self.boundary_spec.neumann_faces)

    @property
    def dirichlet_faces(self) -> list:
        if self.boundary_spec is None:
            return []
        return list(self.boundary_spec.dirichlet_faces)


def _expr_or_scalar(spec):
    if isinstance(spec, (int, float)):
        return float(spec)
    return AnalyticExpr.from_config(spec)


def _field_values(spec, grid: Grid):
    obj = _expr_or_scalar(spec)
    if isinstance(obj, float):
        return np.full(grid.dims, obj)
    return obj.evaluate_on(grid)


def _build_metric(spec: dict, grid: Grid) -> MetricData:
    family = spec["family"]
    if family == "flat":
        return metric_flat(grid)
    if family == "conformal":
        return metric_conformal(grid, _field_values(spec["phi"], grid))
    if family == "diagonal":
        return metric_diagonal(grid, [_field_values(e, grid)
                                      for e in spec["entries"]])
    return metric_constant(grid, spec["components"])


def _build_p(spec: dict, grid: Grid):
    family = spec["family"]
    if family == "zero":
        return 0.0
    if family == "trace":
        return float(spec["c"])
    comps = [_field_values(c, grid) for c in spec["components"]]
    return np.stack(comps, axis=-1)


def build_scenario(config: dict, resolution: int | None = None) -> Scenario:
    """Realize a validated config.  ``resolution`` overrides the cell count
    per axis (dims become resolution + 1) while keeping the box."""
    config = validate_config(config)
    gspec = config["grid"]
    dims = tuple(gspec["dims"])
    if resolution is not None:
        if resolution < 4:
            raise ConfigError("grid.dims", f"resolution must be >= 4, got {resolution}")
        dims = (resolution + 1,) * 3
    grid = Grid.from_box(dims, gspec["box"])
    m = _build_metric(config["metric"], grid)
    p_spec = _build_p(config["p"], grid)
    h_spec = config["h"]
    h_values = h_spec if isinstance(h_spec, float) else _field_values(h_spec, grid)
    idf = make_initial_data(m, p_spec, h_values)

    sol = config["solution"]
    result = None
    bc_spec = None
    reference = None
    if sol["mode"] == "manufactured":
        u = ScalarField(grid, _field_values(sol["u"], grid))
    else:
        faces = {}
        for face in FACES:
            entry = sol["boundary"][face]
            if entry["kind"] == "dirichlet":
                faces[face] = BoundaryCondition.dirichlet(
                    _expr_or_scalar(entry["value"]))
            else:
                faces[face] = BoundaryCondition.neumann()
        bc_spec = BoundarySpec(faces=faces)
        solver_cfg = SolverConfig(**{k: (tuple(v) if k == "delta_schedule" else v)
                                     for k, v in sol.get("solver", {}).items()})
        result = solve(m, idf, bc_spec, solver_cfg)
        u = result.u
        if "reference" in sol:
            reference = _field_values(sol["reference"], grid)
    return Scenario(config=config, grid=grid, metric=m, idf=idf, u=u,
                    solve_result=result, reference=reference,
                    boundary_spec=bc_spec)

"""Scenario pipeline: build, solve, verify, and emit artifacts.

``run_scenario`` executes the full chain (metric -> initial data -> solution
-> level split -> checks) and writes report.json / summary.csv / manifest.json
plus optional field and surface dumps.  ``convergence_study`` reruns a
scenario over a resolution ladder and fits observed orders for every
identity-type check.

Timings live only in the manifest; report.json and summary.csv depend purely
on the computed values, so identical configs reproduce them byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import io as artifacts
from .boundary import boundary_geometry
from .calculus import DerivedFields
from .grid import FACES
from .levelset import build_field_table, regular_split
from .scenarios import ConfigError, Scenario, build_scenario, builtin_config
from .verify import (DEFAULT_TOLERANCES, VerificationReport,
                     boundary_integral_lhs, bulk_integral_rhs,
                     check_dirichlet_lemma, check_neumann_boundary_term,
                     check_neumann_gradient_lemma, check_proof_identities,
                     evaluate_conditions, verify_main_inequality)

COAREA_FLOOR = 1e-9


@dataclass
class RunManifest:
    name: str
    config_hash: str
    artifact_version: int
    resolution: int | None
    out_dir: str | None
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    overall_pass: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name, "config_hash": self.config_hash,
            "artifact_version": self.artifact_version,
            "resolution": self.resolution, "out_dir": self.out_dir,
            "timings": dict(self.timings), "files": list(self.files),
            "overall_pass": self.overall_pass,
        }


@dataclass
class RunOutcome:
    scenario: Scenario
    reports: list
    manifest: RunManifest
    report_doc: dict
    split: object

    @property
    def overall_pass(self) -> bool:
        return self.manifest.overall_pass


def check_group(report_name: str) -> str:
    """Map a report name to its scheduling group."""
    if report_name == "main_inequality":
        return "main"
    for prefix, group in (("dirichlet_lemma", "dirichlet"),
                          ("neumann_gradient", "neumann_gradient"),
                          ("neumann_boundary", "neumann_boundary"),
                          ("identity.", "identities"),
                          ("coarea.", "coarea"),
                          ("condition.", "conditions"),
                          ("solver.reference", "reference")):
        if report_name.startswith(prefix):
            return group
    return "other"


def resolve_config(config) -> dict:
    """Accept a dict, a built-in name, or a JSON file path."""
    if isinstance(config, dict):
        return config
    if not isinstance(config, str):
        raise ConfigError("<config>", f"expected dict, name or path, got {type(config).__name__}")
    if os.path.isfile(config):
        with open(config) as fh:
            try:
                return json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<config>", f"invalid JSON in {config}: {exc}") from exc
    return builtin_config(config)


def _scaled_tolerances(scenario: Scenario, tolerance_scale: float) -> dict:
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(scenario.verification["tolerances"])
    return {k: v * tolerance_scale for k, v in tols.items()}


def _constant_dirichlet_faces(scenario: Scenario) -> list:
    """Faces on which the realized field is constant (the structural
    precondition of the Dirichlet boundary lemma).

    Solved scenarios offer their Dirichlet faces; manufactured fields have
    no boundary conditions, so every face is a candidate.
    """
    out = []
    grid = scenario.grid
    candidates = scenario.dirichlet_faces or list(FACES)
    for face in candidates:
        vals = scenario.u.values[grid.face_node_slices(face)]
        if float(vals.max() - vals.min()) <= 1e-10:
            out.append(face)
    return out


def run_checks(scenario: Scenario, tolerance_scale: float = 1.0,
               df: DerivedFields | None = None):
    """All scheduled checks for a built scenario.

    Returns (reports, split, extras) where extras carries the boundary/bulk
    integral breakdowns for the report document.
    """
    m = scenario.metric
    u = scenario.u
    idf = scenario.idf
    ver = scenario.verification
    tols = _scaled_tolerances(scenario, tolerance_scale)
    checks = set(scenario.checks)

    if df is None:
        df = DerivedFields.build(u, m, idf)
    bg = boundary_geometry(m)
    table = build_field_table(u, m, idf)
    level_range = ver["level_range"]
    split = regular_split(u, m, n_levels=ver["n_levels"],
                          epsilon_reg=ver["epsilon_reg"], idf=idf, table=table,
                          level_range=None if level_range is None
                          else tuple(level_range))

    reports = []
    extras = {}

    if "main" in checks or "coarea" in checks:
        if "main" in checks:
            rep = verify_main_inequality(
                u, idf, m, split, bg=bg, tolerance=tols["main_inequality"],
                eps_neq0=ver["eps_neq0"], table=table, df=df)
            detail = rep.breakdown["rhs_detail"]
            slice_terms = detail["slice_terms"]
            # the derivation-weight variant halves the h-group; reported for
            # comparison, never gated on
            rep.breakdown["rhs_half_weight_h"] = (
                slice_terms["hessian_term"] + slice_terms["energy_term"]
                + 0.5 * (slice_terms["h_quadratic_term"]
                         + slice_terms["h_gradient_term"])
                + slice_terms["gauss_term"])
            reports.append(rep)
            slice_total = rep.rhs
            volume_total = detail["volume_total"]
            extras["lhs_detail"] = rep.breakdown["lhs_detail"]
            extras["rhs_detail"] = detail
        else:
            slice_total, detail = bulk_integral_rhs(u, idf, m, split,
                                                    table=table, df=df)
            volume_total = detail["volume_total"]
            extras["rhs_detail"] = detail
        if "coarea" in checks:
            denom = max(abs(slice_total), abs(volume_total), COAREA_FLOOR)
            rel = abs(slice_total - volume_total) / denom
            reports.append(VerificationReport.identity(
                "coarea.consistency", rel, tols["coarea.consistency"],
                slice_total=slice_total, volume_total=volume_total,
                denominator=denom))

    if "dirichlet" in checks:
        for face in _constant_dirichlet_faces(scenario):
            reports.append(check_dirichlet_lemma(
                u, idf, m, bg, face, tolerance=tols["dirichlet_lemma"], df=df))

    if "neumann_gradient" in checks:
        for face in scenario.neumann_faces:
            reports.append(check_neumann_gradient_lemma(
                u, m, bg, face, tolerance=tols["neumann_gradient"],
                df=df, idf=idf))

    if "neumann_boundary" in checks:
        for face in scenario.neumann_faces:
            reports.append(check_neumann_boundary_term(
                u, idf, m, bg, face, split,
                tolerance=tols["neumann_boundary"], df=df, table=table))

    if "identities" in checks:
        reports.extend(check_proof_identities(
            u, idf, m, epsilon_reg=split.epsilon_reg, bg=bg, split=split,
            table=table, df=df,
            tolerances={k: v for k, v in tols.items()
                        if k.startswith("identity.")}))

    if "conditions" in checks:
        reports.extend(evaluate_conditions(idf, m, bg=bg, u=u,
                                           epsilon_reg=split.epsilon_reg))

    if "reference" in checks and scenario.reference is not None:
        err = float(np.abs(u.values - scenario.reference).max())
        reports.append(VerificationReport.identity(
            "solver.reference_error", err, tols["reference_error"]))

    return reports, split, extras


def _overall_pass(reports, required_groups) -> bool:
    seen = {g: [] for g in required_groups}
    for rep in reports:
        group = check_group(rep.name)
        if group in seen:
            seen[group].append(rep.passed)
    return all(flags and all(flags) for flags in seen.values())


def _split_summary(split) -> dict:
    return {
        "n_levels": int(split.levels.size),
        "n_regular": int(np.sum(split.regular_mask)),
        "epsilon_reg": float(split.epsilon_reg),
        "level_range": [float(split.level_range[0]),
                        float(split.level_range[1])],
        "delta_t": float(split.delta_t),
        "A_measure": float(split.A_measure),
        "area_integral_over_A": float(split.area_integral_over_A),
        "c0": float(split.c0),
        "levels": [float(t) for t in split.levels],
        "regular_mask": [bool(b) for b in split.regular_mask],
    }


def _solver_summary(scenario: Scenario) -> dict | None:
    res = scenario.solve_result
    if res is None:
        return None
    return {
        "converged": bool(res.converged),
        "picard_iterations": int(res.iterations),
        "linear_iterations": int(res.linear_iterations),
        "delta_final": float(res.delta_final),
        "residual_max": float(res.residual_max),
        "compatibility": None if res.compatibility is None
        else float(res.compatibility),
        "stages": [{"delta": float(s.delta),
                    "picard_iterations": int(s.picard_iterations),
                    "final_update": float(s.final_update),
                    "linear_iterations": int(s.linear_iterations)}
                   for s in res.stages],
    }


def run_scenario(config, out_dir: str | None = None,
                 dump_fields: bool = False, dump_surfaces: bool = False,
                 tolerance_scale: float = 1.0, resolution: int | None = None,
                 write: bool = True) -> RunOutcome:
    """Execute one scenario end to end; see the module docstring."""
    raw = resolve_config(config)
    timings = {}
    t0 = time.perf_counter()
    scenario = build_scenario(raw, resolution=resolution)
    timings["build_and_solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reports, split, extras = run_checks(scenario, tolerance_scale=tolerance_scale)
    timings["checks"] = time.perf_counter() - t0

    required = scenario.required
    overall = _overall_pass(reports, required)

    doc = {
        "name": scenario.name,
        "artifact_version": artifacts.ARTIFACT_VERSION,
        "config_hash": artifacts.config_hash(scenario.config),
        "resolution": resolution,
        "config": scenario.config,
        "solver": _solver_summary(scenario),
        "split": _split_summary(split),
        "checks": [dict(rep.to_dict(), required=(check_group(rep.name)
                                                 in required))
                   for rep in reports],
        "overall_pass": overall,
    }

    manifest = RunManifest(
        name=scenario.name, config_hash=doc["config_hash"],
        artifact_version=artifacts.ARTIFACT_VERSION, resolution=resolution,
        out_dir=None, timings=timings, overall_pass=overall)

    if write:
        if out_dir is None:
            out_dir = scenario.config.get("output", {}).get(
                "directory", os.path.join("runs", scenario.name))
        os.makedirs(out_dir, exist_ok=True)
        manifest.out_dir = out_dir
        t0 = time.perf_counter()
        artifacts.write_json(os.path.join(out_dir, "report.json"), doc)
        manifest.files.append("report.json")
        artifacts.write_summary_csv(os.path.join(out_dir, "summary.csv"),
                                    reports, set(required), overall,
                                    check_group)
        manifest.files.append("summary.csv")
        if dump_fields:
            df = DerivedFields.build(scenario.u, scenario.metric, scenario.idf)
            named = {"u": scenario.u.values, "gradnorm": df.gradnorm,
                     "laplacian": df.lap_u, "h": scenario.idf.h.values,
                     "trace_p": scenario.idf.trace_p.values,
                     "mu": scenario.idf.mu.values}
            files = artifacts.dump_fields(os.path.join(out_dir, "fields"),
                                          scenario.grid, named)
            manifest.files.extend(os.path.join("fields", f) for f in files)
        if dump_surfaces:
            from .levelset import extract_level_set
            table = build_field_table(scenario.u, scenario.metric, scenario.idf)
            surfaces = []
            for j in np.flatnonzero(split.regular_mask):
                surf = extract_level_set(scenario.u, float(split.levels[j]),
                                         scenario.metric, idf=scenario.idf,
                                         table=table)
                if surf.n_triangles:
                    surfaces.append(surf)
            files = artifacts.dump_surfaces(os.path.join(out_dir, "surfaces"),
                                            scenario.grid, surfaces)
            manifest.files.extend(os.path.join("surfaces", f) for f in files)
        timings["write"] = time.perf_counter() - t0
        artifacts.write_json(os.path.join(out_dir, "manifest.json"),
                             manifest.to_dict())
        manifest.files.append("manifest.json")

    return RunOutcome(scenario=scenario, reports=reports, manifest=manifest,
                      report_doc=doc, split=split)


# ============================================================================
# Convergence studies
# ============================================================================


@dataclass
class StudyResult:
    name: str
    resolutions: list
    rows: list                       # (check, resolution, residual)
    orders: dict                     # check -> fitted order (nan if unfit)
    completed: bool
    failure: str | None = None


def _fit_order(res_pairs) -> float:
    """Least-squares slope of log(residual) against log(dx).

    Residuals at or below rounding noise (1e-12) are excluded: a check whose
    two routes coincide to machine precision has no order to fit, and noise
    that grows with conditioning would otherwise fit a negative slope.
    """
    pts = [(1.0 / r, v) for r, v in res_pairs if v > 1e-12]
    if len(pts) < 2:
        return float("nan")
    logdx = np.log([p[0] for p in pts])
    logv = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(logdx, logv, 1)
    return float(slope)


class StudyFailure(RuntimeError):
    """A resolution in a study failed; partial results are attached."""

    def __init__(self, result: StudyResult):
        self.result = result
        super().__init__(f"study aborted: {result.failure}")


def convergence_study(config, resolutions, out_dir: str | None = None,
                      tolerance_scale: float = 1.0,
                      write: bool = True) -> StudyResult:
    """Rerun a scenario across a resolution ladder and fit residual orders.

    Residual rows cover every identity-kind, non-vacuous check.  A failed
    resolution aborts the ladder; rows collected so far are preserved (and
    written when an output directory is in play).
    """
    raw = resolve_config(config)
    resolutions = [int(r) for r in resolutions]
    if len(resolutions) < 3:
        raise ConfigError("resolutions", f"need at least 3 resolutions, got {resolutions}")
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ConfigError("resolutions", f"resolutions must be strictly increasing, got {resolutions}")

    name = raw.get("name", "study")
    rows = []
    failure = None
    try:
        for res in resolutions:
            outcome = run_scenario(raw, resolution=res, write=False,
                                   tolerance_scale=tolerance_scale)
            for rep in outcome.reports:
                if rep.kind == "identity" and not rep.vacuous:
                    rows.append((rep.name, res, rep.residual))
    except Exception as exc:                       # noqa: BLE001 - preserved partial
        failure = f"{type(exc).__name__}: {exc}"

    by_check = {}
    for check, res, resid in rows:
        by_check.setdefault(check, []).append((res, resid))
    orders = {check: _fit_order(pairs) for check, pairs in by_check.items()}

    result = StudyResult(name=name, resolutions=resolutions, rows=rows,
                         orders=orders, completed=failure is None,
                         failure=failure)
    if write and out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "study.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("check", "resolution", "residual"))
            for check, res, resid in rows:
                writer.writerow((check, res, repr(float(resid))))
            for check in sorted(orders):
                writer.writerow((check, "order", repr(orders[check])))
    if failure is not None:
        raise StudyFailure(result)
    return result

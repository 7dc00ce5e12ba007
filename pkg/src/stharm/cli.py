"""Command-line front end.

Subcommands:
  run <config>    execute a scenario (built-in name or JSON config path)
  study <config>  rerun a scenario over a resolution ladder and fit orders
  list            show the built-in scenario catalog

Exit codes: 0 all required checks pass; 1 a required check failed;
2 invalid configuration or usage; 3 solver failure.  Failures emit a
one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .pde import SolverError
from .runner import StudyFailure, convergence_study, run_scenario
from .scenarios import ConfigError, builtin_catalog


def _error_record(error_class: str, message: str, **extra) -> None:
    record = {"error_class": error_class, "message": message, **extra}
    print(json.dumps(record), file=sys.stderr)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stharm",
        description="Level-set verification lab for the perturbed "
                    "spacetime-harmonic equation on initial data sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("config", help="built-in scenario name or JSON config path")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--resolution", type=int, default=None,
                       help="override the cell count per axis")
    run_p.add_argument("--dump-fields", action="store_true",
                       help="write binary nodal field dumps with a JSON sidecar")
    run_p.add_argument("--dump-surfaces", action="store_true",
                       help="write OBJ level-set surfaces and a triangle CSV")
    run_p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="multiply every check tolerance by this factor")

    study_p = sub.add_parser("study", help="convergence study over resolutions")
    study_p.add_argument("config", help="built-in scenario name or JSON config path")
    study_p.add_argument("--resolutions", required=True,
                         help="comma-separated cell counts, e.g. 16,32,64")
    study_p.add_argument("--out", default=None, help="output directory")
    study_p.add_argument("--tolerance-scale", type=float, default=1.0)

    list_p = sub.add_parser("list", help="list built-in scenarios")
    list_p.add_argument("--json", action="store_true", dest="as_json",
                        help="machine-readable JSON output")
    return parser


def _cmd_run(args) -> int:
    try:
        outcome = run_scenario(args.config, out_dir=args.out,
                               dump_fields=args.dump_fields,
                               dump_surfaces=args.dump_surfaces,
                               tolerance_scale=args.tolerance_scale,
                               resolution=args.resolution)
    except ConfigError as exc:
        _error_record("config", str(exc), path=exc.path)
        return 2
    except SolverError as exc:
        _error_record("solver", f"{type(exc).__name__}: {exc}")
        return 3

    for rep in outcome.reports:
        status = "PASS" if rep.passed else "FAIL"
        detail = (f"margin={rep.margin:+.6g}" if rep.kind == "inequality"
                  else f"residual={rep.residual:.6g}")
        print(f"[{status}] {rep.name}: {detail} (tol {rep.tolerance:g})")
    where = outcome.manifest.out_dir
    print(f"overall: {'PASS' if outcome.overall_pass else 'FAIL'}"
          + (f"  (artifacts in {where})" if where else ""))
    if not outcome.overall_pass:
        failed = [rep.name for rep in outcome.reports if not rep.passed]
        _error_record("checks", "required check(s) failed", failed=failed)
        return 1
    return 0


def _cmd_study(args) -> int:
    try:
        resolutions = [int(tok) for tok in args.resolutions.split(",") if tok]
    except ValueError:
        _error_record("config", f"cannot parse resolutions {args.resolutions!r}")
        return 2
    out_dir = args.out if args.out is not None else "runs/study"
    try:
        result = convergence_study(args.config, resolutions, out_dir=out_dir,
                                   tolerance_scale=args.tolerance_scale)
    except ConfigError as exc:
        _error_record("config", str(exc), path=exc.path)
        return 2
    except StudyFailure as exc:
        _error_record("solver", str(exc),
                      completed_rows=len(exc.result.rows))
        return 3

    for check in sorted(result.orders):
        print(f"{check}: fitted order {result.orders[check]:.3f}")
    print(f"study artifacts in {out_dir}")
    return 0


def _cmd_list(args) -> int:
    catalog = builtin_catalog()
    if args.as_json:
        print(json.dumps([{"name": n, "description": d} for n, d in catalog],
                         indent=2))
    else:
        width = max(len(n) for n, _ in catalog)
        for name, desc in catalog:
            print(f"{name:<{width}}  {desc}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "study":
        return _cmd_study(args)
    return _cmd_list(args)


if __name__ == "__main__":
    sys.exit(main())

"""Artifact writers: JSON reports, CSV summaries, run manifests, binary
field dumps with sidecars, and OBJ surface exports.

Float cells in the CSV use repr() (shortest round-trip), so identical check
values produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os

import numpy as np

SUMMARY_COLUMNS = ("name", "kind", "required", "passed", "vacuous", "lhs",
                   "rhs", "margin", "residual", "tolerance", "error_bar")

ARTIFACT_VERSION = 1


def config_hash(normalized_config: dict) -> str:
    payload = json.dumps(normalized_config, sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary_csv(path: str, reports, required_groups, overall_pass: bool,
                      group_of) -> None:
    """Flat per-check summary plus a trailing overall row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for rep in reports:
            row = {
                "name": rep.name, "kind": rep.kind,
                "required": group_of(rep.name) in required_groups,
                "passed": rep.passed, "vacuous": rep.vacuous,
                "lhs": rep.lhs, "rhs": rep.rhs, "margin": rep.margin,
                "residual": rep.residual, "tolerance": rep.tolerance,
                "error_bar": rep.error_bar,
            }
            writer.writerow([_cell(row[c]) for c in SUMMARY_COLUMNS])
        writer.writerow([_cell(v) for v in
                         ("overall", "summary", True, overall_pass, False,
                          0.0, 0.0, 0.0, 0.0, 0.0, 0.0)])


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def dump_fields(directory: str, grid, named_arrays: dict) -> list:
    """Write named nodal arrays as .npy plus one JSON sidecar; returns the
    relative file names written."""
    os.makedirs(directory, exist_ok=True)
    files = []
    entries = {}
    for name, array in named_arrays.items():
        fname = f"{name}.npy"
        np.save(os.path.join(directory, fname), np.asarray(array))
        files.append(fname)
        entries[name] = {"file": fname, "shape": list(np.shape(array)),
                         "dtype": str(np.asarray(array).dtype)}
    sidecar = {
        "artifact_version": ARTIFACT_VERSION,
        "grid": {"dims": list(grid.dims),
                 "spacing": [float(s) for s in grid.spacing],
                 "origin": [float(o) for o in grid.origin]},
        "fields": entries,
        "layout": "C-order nodal arrays indexed [ix, iy, iz]; symmetric "
                  "tensors store (xx, xy, xz, yy, yz, zz) in a trailing axis",
    }
    write_json(os.path.join(directory, "fields.json"), sidecar)
    files.append("fields.json")
    return files


def write_surface_obj(path: str, grid, surface) -> None:
    """Wavefront OBJ of one triangulated level set in physical coordinates."""
    verts = surface.tri_vertices.reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write(f"# level set t={surface.level!r}, "
                 f"{surface.n_triangles} triangles\n")
        for v in verts:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for k in range(surface.n_triangles):
            a = 3 * k + 1
            fh.write(f"f {a} {a + 1} {a + 2}\n")


def dump_surfaces(directory: str, grid, surfaces) -> list:
    """OBJ per surface plus one CSV of per-triangle geometry."""
    os.makedirs(directory, exist_ok=True)
    files = []
    csv_path = os.path.join(directory, "triangles.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("level", "area", "mean_curvature", "gauss_curvature",
                         "gradnorm"))
        for surf in surfaces:
            fname = f"surface_{surf.level:.6f}.obj"
            write_surface_obj(os.path.join(directory, fname), grid, surf)
            files.append(fname)
            for k in range(surf.n_triangles):
                writer.writerow([repr(float(surf.level)),
                                 repr(float(surf.dA[k])),
                                 repr(float(surf.H[k])),
                                 repr(float(surf.K[k])),
                                 repr(float(surf.grad_norm[k]))])
    files.append("triangles.csv")
    return files

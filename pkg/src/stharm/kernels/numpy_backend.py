"""Pure-numpy implementations of the hot kernels.

Semantics and floating-point arithmetic order match the compiled backend
exactly (same expressions, same corner/edge traversal order), so the two
backends produce bit-identical output.
"""

from __future__ import annotations

import numpy as np

from .tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE


def marching_cubes(values: np.ndarray, iso: float) -> np.ndarray:
    """Extract the iso-surface of a node field as independent triangles.

    Args:
        values: (nx, ny, nz) float64 node values.
        iso: level to contour.

    Returns:
        (n_tri, 3, 3) float64 triangle vertices in fractional grid-index
        coordinates, cells traversed in C order, vertices in case-table order.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    nx, ny, nz = v.shape

    corner = np.empty((8,) + (nx - 1, ny - 1, nz - 1), dtype=np.float64)
    for c, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        corner[c] = v[ox:nx - 1 + ox, oy:ny - 1 + oy, oz:nz - 1 + oz]

    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c in range(8):
        case |= (corner[c] < iso).astype(np.int64) << c

    flat_case = case.ravel()
    cells = np.flatnonzero((flat_case != 0) & (flat_case != 255))
    if cells.size == 0:
        return np.empty((0, 3, 3), dtype=np.float64)

    rows = TRI_TABLE[flat_case[cells]]                      # (m, 16)
    tri_slots = rows[:, :15].reshape(-1, 5, 3)              # (m, 5, 3)
    valid = tri_slots[:, :, 0] >= 0                         # (m, 5)
    tri_edges = tri_slots[valid]                            # (ntri, 3)
    tri_cells = np.repeat(cells, valid.sum(axis=1))         # (ntri,)

    ci, cj, ck = np.unravel_index(tri_cells, (nx - 1, ny - 1, nz - 1))
    base = np.stack([ci, cj, ck], axis=-1)[:, None, :]      # (ntri, 1, 3)

    ca = EDGE_CORNERS[tri_edges, 0]                         # (ntri, 3)
    cb = EDGE_CORNERS[tri_edges, 1]
    offs_a = CORNER_OFFSETS[ca]                             # (ntri, 3, 3)
    offs_b = CORNER_OFFSETS[cb]

    idx_a = base + offs_a
    idx_b = base + offs_b
    val_a = v[idx_a[..., 0], idx_a[..., 1], idx_a[..., 2]]
    val_b = v[idx_b[..., 0], idx_b[..., 1], idx_b[..., 2]]

    t = (iso - val_a) / (val_b - val_a)
    verts = idx_a.astype(np.float64) + t[..., None] * (offs_b - offs_a).astype(np.float64)
    return np.ascontiguousarray(verts)


def interp_trilinear(field: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a node field at fractional index coordinates.

    Args:
        field: (nx, ny, nz) or (nx, ny, nz, C) float64 node values.
        pts: (n, 3) fractional index coordinates (clamped to the grid).

    Returns:
        (n,) or (n, C) interpolated values.
    """
    f = np.ascontiguousarray(field, dtype=np.float64)
    scalar = f.ndim == 3
    if scalar:
        f = f[..., None]
    nx, ny, nz, nc = f.shape
    pts = np.ascontiguousarray(pts, dtype=np.float64)

    out = np.zeros((pts.shape[0], nc), dtype=np.float64)
    ix = np.empty((pts.shape[0], 3), dtype=np.int64)
    fr = np.empty_like(pts)
    for a, n in enumerate((nx, ny, nz)):
        x = np.clip(pts[:, a], 0.0, float(n - 1))
        i = np.minimum(x.astype(np.int64), n - 2)
        ix[:, a] = i
        fr[:, a] = x - i

    for ox, oy, oz in CORNER_OFFSETS:
        wx = fr[:, 0] if ox else 1.0 - fr[:, 0]
        wy = fr[:, 1] if oy else 1.0 - fr[:, 1]
        wz = fr[:, 2] if oz else 1.0 - fr[:, 2]
        w = wx * wy * wz
        out += w[:, None] * f[ix[:, 0] + ox, ix[:, 1] + oy, ix[:, 2] + oz]

    return out[:, 0] if scalar else out

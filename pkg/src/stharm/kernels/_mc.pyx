# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels: marching-cubes extraction and
trilinear interpolation.  Arithmetic matches the numpy backend expression for
expression so both produce bit-identical results (the build disables
floating-point contraction for the same reason).
"""

import numpy as np

cimport numpy as cnp

from .tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE

cnp.import_array()

cdef long[:, ::1] _CORNERS = np.ascontiguousarray(CORNER_OFFSETS, dtype=np.int64)
cdef long[:, ::1] _EDGES = np.ascontiguousarray(EDGE_CORNERS, dtype=np.int64)
cdef long[:, ::1] _TRIS = np.ascontiguousarray(TRI_TABLE, dtype=np.int64)
cdef long[::1] _NTRI = np.ascontiguousarray(
    np.sum(TRI_TABLE[:, ::3] >= 0, axis=1), dtype=np.int64)


def marching_cubes(values, double iso):
    """Extract the iso-surface of a node field as independent triangles.

    Returns (n_tri, 3, 3) float64 vertices in fractional index coordinates.
    """
    cdef double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1], nz = v.shape[2]
    cdef Py_ssize_t i, j, k, c, s, e, a
    cdef long case_id, n_total = 0
    cdef double val

    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case_id = 0
                for c in range(8):
                    val = v[i + _CORNERS[c, 0], j + _CORNERS[c, 1], k + _CORNERS[c, 2]]
                    if val < iso:
                        case_id |= 1 << c
                n_total += _NTRI[case_id]

    out_arr = np.empty((n_total, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n = 0
    cdef long edge, ca, cb
    cdef double va, vb, t
    cdef long oa0, oa1, oa2, ob0, ob1, ob2

    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case_id = 0
                for c in range(8):
                    val = v[i + _CORNERS[c, 0], j + _CORNERS[c, 1], k + _CORNERS[c, 2]]
                    if val < iso:
                        case_id |= 1 << c
                if case_id == 0 or case_id == 255:
                    continue
                for s in range(5):
                    if _TRIS[case_id, 3 * s] < 0:
                        break
                    for a in range(3):
                        edge = _TRIS[case_id, 3 * s + a]
                        ca = _EDGES[edge, 0]
                        cb = _EDGES[edge, 1]
                        oa0 = _CORNERS[ca, 0]; oa1 = _CORNERS[ca, 1]; oa2 = _CORNERS[ca, 2]
                        ob0 = _CORNERS[cb, 0]; ob1 = _CORNERS[cb, 1]; ob2 = _CORNERS[cb, 2]
                        va = v[i + oa0, j + oa1, k + oa2]
                        vb = v[i + ob0, j + ob1, k + ob2]
                        t = (iso - va) / (vb - va)
                        out[n, a, 0] = <double>(i + oa0) + t * <double>(ob0 - oa0)
                        out[n, a, 1] = <double>(j + oa1) + t * <double>(ob1 - oa1)
                        out[n, a, 2] = <double>(k + oa2) + t * <double>(ob2 - oa2)
                    n += 1
    return out_arr


def interp_trilinear(field, pts):
    """Trilinear interpolation of a node field at fractional index coordinates.

    field: (nx, ny, nz) or (nx, ny, nz, C) float64; pts: (n, 3).
    Returns (n,) or (n, C).
    """
    f_in = np.asarray(field, dtype=np.float64)
    scalar = f_in.ndim == 3
    if scalar:
        f_in = f_in[..., None]
    cdef double[:, :, :, ::1] f = np.ascontiguousarray(f_in)
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2], nc = f.shape[3]
    cdef Py_ssize_t npts = p.shape[0]

    out_arr = np.zeros((npts, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m, c, q
    cdef long dims[3]
    dims[0] = nx; dims[1] = ny; dims[2] = nz
    cdef long ix[3]
    cdef double fr[3]
    cdef double x, wx, wy, wz, w
    cdef long a, i

    for m in range(npts):
        for a in range(3):
            x = p[m, a]
            if x < 0.0:
                x = 0.0
            if x > <double>(dims[a] - 1):
                x = <double>(dims[a] - 1)
            i = <long>x
            if i > dims[a] - 2:
                i = dims[a] - 2
            ix[a] = i
            fr[a] = x - <double>i
        for c in range(8):
            wx = fr[0] if _CORNERS[c, 0] else 1.0 - fr[0]
            wy = fr[1] if _CORNERS[c, 1] else 1.0 - fr[1]
            wz = fr[2] if _CORNERS[c, 2] else 1.0 - fr[2]
            w = wx * wy * wz
            for q in range(nc):
                out[m, q] += w * f[ix[0] + _CORNERS[c, 0],
                                   ix[1] + _CORNERS[c, 1],
                                   ix[2] + _CORNERS[c, 2], q]

    return out_arr[:, 0] if scalar else out_arr

"""Finite-difference stencils on node grids.

Interior nodes use second-order centered differences; the two boundary
planes of each axis use second-order one-sided stencils, so every derivative
field is second-order accurate on the full grid.
"""

from __future__ import annotations

import numpy as np

from .grid import FACE_AXIS_SIDE, Grid, tangent_axes


def _sl(axis: int, s: slice | int, ndim_extra: int = 0) -> tuple:
    """Index tuple applying ``s`` along ``axis`` of a (nx, ny, nz, ...) array."""
    out = [slice(None)] * (3 + ndim_extra)
    out[axis] = s
    return tuple(out)


def deriv1(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """First derivative along one axis (array may carry trailing component axes)."""
    v = np.asarray(values)
    extra = v.ndim - 3
    out = np.empty_like(v)
    i = lambda s: _sl(axis, s, extra)  # noqa: E731
    out[i(slice(1, -1))] = (v[i(slice(2, None))] - v[i(slice(None, -2))]) / (2.0 * spacing)
    out[i(0)] = (-3.0 * v[i(0)] + 4.0 * v[i(1)] - v[i(2)]) / (2.0 * spacing)
    out[i(-1)] = (3.0 * v[i(-1)] - 4.0 * v[i(-2)] + v[i(-3)]) / (2.0 * spacing)
    return out


def deriv2(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Second derivative along one axis."""
    v = np.asarray(values)
    extra = v.ndim - 3
    out = np.empty_like(v)
    i = lambda s: _sl(axis, s, extra)  # noqa: E731
    h2 = spacing * spacing
    out[i(slice(1, -1))] = (v[i(slice(2, None))] - 2.0 * v[i(slice(1, -1))]
                            + v[i(slice(None, -2))]) / h2
    out[i(0)] = (2.0 * v[i(0)] - 5.0 * v[i(1)] + 4.0 * v[i(2)] - v[i(3)]) / h2
    out[i(-1)] = (2.0 * v[i(-1)] - 5.0 * v[i(-2)] + 4.0 * v[i(-3)] - v[i(-4)]) / h2
    return out


def deriv_mixed(values: np.ndarray, axis_a: int, axis_b: int,
                spacing_a: float, spacing_b: float) -> np.ndarray:
    """Mixed second derivative d_a d_b (axes must differ)."""
    return deriv1(deriv1(values, axis_b, spacing_b), axis_a, spacing_a)


def grad_components(values: np.ndarray, grid: Grid) -> np.ndarray:
    """All three partial derivatives, stacked as a trailing axis (..., 3)."""
    return np.stack([deriv1(values, a, grid.spacing[a]) for a in range(3)], axis=-1)


def second_derivs_sym(values: np.ndarray, grid: Grid) -> np.ndarray:
    """All second partials d_i d_j as (..., 6) in the order xx, xy, xz, yy, yz, zz."""
    d = grid.spacing
    return np.stack([
        deriv2(values, 0, d[0]),
        deriv_mixed(values, 0, 1, d[0], d[1]),
        deriv_mixed(values, 0, 2, d[0], d[2]),
        deriv2(values, 1, d[1]),
        deriv_mixed(values, 1, 2, d[1], d[2]),
        deriv2(values, 2, d[2]),
    ], axis=-1)


def face_outward_deriv(values: np.ndarray, grid: Grid, face: str) -> np.ndarray:
    """Second-order one-sided derivative of a volume field along the outward
    coordinate direction of a face, evaluated on that face.

    Returns an array over the face nodes, ordered by the tangential axes in
    increasing axis order (trailing component axes are preserved).
    """
    axis, side = FACE_AXIS_SIDE[face]
    v = np.asarray(values)
    extra = v.ndim - 3
    h = grid.spacing[axis]
    i = lambda s: _sl(axis, s, extra)  # noqa: E731
    if side == 1:
        return (3.0 * v[i(-1)] - 4.0 * v[i(-2)] + v[i(-3)]) / (2.0 * h)
    return -(-3.0 * v[i(0)] + 4.0 * v[i(1)] - v[i(2)]) / (2.0 * h)


def face_deriv1(face_values: np.ndarray, grid: Grid, face: str, tangent_index: int) -> np.ndarray:
    """First derivative of a face array along one of its two tangential axes.

    ``tangent_index`` is 0 or 1, indexing ``tangent_axes`` of the face normal.
    """
    axis, _ = FACE_AXIS_SIDE[face]
    taxes = tangent_axes(axis)
    spacing = grid.spacing[taxes[tangent_index]]
    v = np.asarray(face_values)
    extra = v.ndim - 2
    out = np.empty_like(v)

    def i(s):
        sl = [slice(None)] * (2 + extra)
        sl[tangent_index] = s
        return tuple(sl)

    out[i(slice(1, -1))] = (v[i(slice(2, None))] - v[i(slice(None, -2))]) / (2.0 * spacing)
    out[i(0)] = (-3.0 * v[i(0)] + 4.0 * v[i(1)] - v[i(2)]) / (2.0 * spacing)
    out[i(-1)] = (3.0 * v[i(-1)] - 4.0 * v[i(-2)] + v[i(-3)]) / (2.0 * spacing)
    return out

"""Structured grids and node-based field containers.

Fields live on the nodes of a rectilinear grid.  Scalar fields store an
``(nx, ny, nz)`` array, vector fields an ``(nx, ny, nz, 3)`` array of
contravariant components, and symmetric rank-2 tensor fields an
``(nx, ny, nz, 6)`` array with the fixed component order

    xx, xy, xz, yy, yz, zz.

All contraction helpers in this module are written against that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

# ============================================================================
# Grid
# ============================================================================

#: The six box faces, named by axis and side.
FACES = ("xlo", "xhi", "ylo", "yhi", "zlo", "zhi")

#: face name -> (axis, side) with side 0 = low, 1 = high
FACE_AXIS_SIDE = {
    "xlo": (0, 0), "xhi": (0, 1),
    "ylo": (1, 0), "yhi": (1, 1),
    "zlo": (2, 0), "zhi": (2, 1),
}

MIN_DIM = 5


class GridError(ValueError):
    """Invalid grid geometry."""


@dataclass
class Grid:
    """Axis-aligned rectilinear node grid.

    Args:
        dims: number of nodes per axis, each >= 5.
        spacing: node spacing per axis, each > 0.
        origin: physical coordinates of node (0, 0, 0).
        boundary_tags: label per face (free-form; the PDE solver keeps its own
            authoritative boundary conditions).
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boundary_tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(c) for c in self.origin)
        if len(self.dims) != 3:
            raise GridError(f"dims must have length 3, got {self.dims}")
        if any(n < MIN_DIM for n in self.dims):
            raise GridError(f"each grid dimension must be >= {MIN_DIM}, got {self.dims}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise GridError(f"spacings must be positive, got {self.spacing}")
        for face in self.boundary_tags:
            if face not in FACES:
                raise GridError(f"unknown face {face!r}; faces are {FACES}")
        for face in FACES:
            self.boundary_tags.setdefault(face, "free")

    @classmethod
    def from_box(cls, dims: Iterable[int], box, **kwargs) -> "Grid":
        """Build a grid whose nodes span ``box = [[x0,x1],[y0,y1],[z0,z1]]``."""
        dims = tuple(int(n) for n in dims)
        box = [(float(a), float(b)) for a, b in box]
        if any(b <= a for a, b in box):
            raise GridError(f"box extents must be increasing, got {box}")
        spacing = tuple((b - a) / (n - 1) for (a, b), n in zip(box, dims))
        origin = tuple(a for a, _ in box)
        return cls(dims=dims, spacing=spacing, origin=origin, **kwargs)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_nodes(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def cell_volume(self) -> float:
        dx, dy, dz = self.spacing
        return dx * dy * dz

    def axis_coords(self, axis: int) -> np.ndarray:
        """1D node coordinates along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full (nx, ny, nz) coordinate arrays X, Y, Z."""
        return np.meshgrid(*(self.axis_coords(a) for a in range(3)), indexing="ij")

    def interior_slices(self, margin: int = 1) -> tuple[slice, slice, slice]:
        """Slices selecting nodes at least ``margin`` layers from every face."""
        return tuple(slice(margin, n - margin) for n in self.dims)

    def index_to_physical(self, pts: np.ndarray) -> np.ndarray:
        """Map fractional index coordinates (n, 3) to physical coordinates."""
        return np.asarray(self.origin) + np.asarray(pts) * np.asarray(self.spacing)

    def node_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (nx, ny, nz), in units of cell volume.

        Boundary nodes get 1/2 per face they lie on, so that
        ``sum(f * weights) * cell_volume`` is the second-order box integral
        of a node field ``f``.
        """
        w = np.ones(self.dims)
        for axis in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = 0
            sl_hi[axis] = self.dims[axis] - 1
            w[tuple(sl_lo)] *= 0.5
            w[tuple(sl_hi)] *= 0.5
        return w

    def face_shape(self, face: str) -> tuple[int, int]:
        axis, _ = FACE_AXIS_SIDE[face]
        t1, t2 = tangent_axes(axis)
        return (self.dims[t1], self.dims[t2])

    def face_node_slices(self, face: str) -> tuple:
        """Volume-array slices selecting the nodes of one face.

        The resulting 2D layout is ordered by the two tangential axes in
        increasing axis order.
        """
        axis, side = FACE_AXIS_SIDE[face]
        sl = [slice(None)] * 3
        sl[axis] = 0 if side == 0 else self.dims[axis] - 1
        return tuple(sl)


def tangent_axes(axis: int) -> tuple[int, int]:
    """The two coordinate axes tangent to a face with the given normal axis."""
    return tuple(a for a in range(3) if a != axis)


# ============================================================================
# Symmetric rank-2 component algebra (component order xx, xy, xz, yy, yz, zz)
# ============================================================================

SYM_COMPONENTS = ("xx", "xy", "xz", "yy", "yz", "zz")

#: (i, j) -> position in the 6-component storage
SYM_INDEX = {(0, 0): 0, (0, 1): 1, (0, 2): 2,
             (1, 1): 3, (1, 2): 4, (2, 2): 5,
             (1, 0): 1, (2, 0): 2, (2, 1): 4}

#: multiplicity of each stored component in a full double contraction
SYM_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])


def sym_to_full(a6: np.ndarray) -> np.ndarray:
    """Expand (..., 6) symmetric storage to a full (..., 3, 3) array."""
    a6 = np.asarray(a6)
    out = np.empty(a6.shape[:-1] + (3, 3), dtype=a6.dtype)
    for (i, j), k in SYM_INDEX.items():
        out[..., i, j] = a6[..., k]
    return out


def full_to_sym(a33: np.ndarray) -> np.ndarray:
    """Store the symmetric part of a full (..., 3, 3) array as (..., 6)."""
    a33 = np.asarray(a33)
    out = np.empty(a33.shape[:-2] + (6,), dtype=a33.dtype)
    for k, (i, j) in enumerate([(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]):
        out[..., k] = 0.5 * (a33[..., i, j] + a33[..., j, i])
    return out


def sym_identity(shape: tuple = ()) -> np.ndarray:
    """Identity matrix in (..., 6) storage."""
    out = np.zeros(shape + (6,))
    out[..., 0] = 1.0
    out[..., 3] = 1.0
    out[..., 5] = 1.0
    return out


def sym_det(a6: np.ndarray) -> np.ndarray:
    a, b, c, d, e, f = (a6[..., k] for k in range(6))
    return a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d)


def sym_inverse(a6: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    """Inverse of a symmetric matrix in 6-component storage (cofactor form)."""
    a, b, c, d, e, f = (a6[..., k] for k in range(6))
    if det is None:
        det = sym_det(a6)
    out = np.empty_like(np.asarray(a6))
    out[..., 0] = d * f - e * e
    out[..., 1] = c * e - b * f
    out[..., 2] = b * e - c * d
    out[..., 3] = a * f - c * c
    out[..., 4] = b * c - a * e
    out[..., 5] = a * d - b * b
    out /= det[..., None]
    return out


def sym_matvec(a6: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(a v)_i = a_ij v_j for (..., 6) matrices and (..., 3) vectors."""
    a, b, c, d, e, f = (a6[..., k] for k in range(6))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([a * x + b * y + c * z,
                     b * x + d * y + e * z,
                     c * x + e * y + f * z], axis=-1)


def sym_quadform(a6: np.ndarray, v: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """a_ij v_i w_j (w defaults to v)."""
    if w is None:
        w = v
    return np.sum(sym_matvec(a6, v) * w, axis=-1)


def sym_trace_with(inv6: np.ndarray, a6: np.ndarray) -> np.ndarray:
    """g^{ij} a_ij for both arguments in 6-component storage."""
    return np.sum(SYM_WEIGHTS * inv6 * a6, axis=-1)


def sym_norm2_with(inv6: np.ndarray, a6: np.ndarray) -> np.ndarray:
    """|a|^2_g = a_ij a_kl g^{ik} g^{jl} (full double contraction)."""
    ginv = sym_to_full(inv6)
    afull = sym_to_full(a6)
    raised = np.einsum("...ik,...jl,...kl->...ij", ginv, ginv, afull)
    return np.einsum("...ij,...ij->...", raised, afull)


def sym_dot_sym(a6: np.ndarray, b6: np.ndarray, inv6: np.ndarray) -> np.ndarray:
    """<a, b>_g = a_ij b_kl g^{ik} g^{jl}."""
    ginv = sym_to_full(inv6)
    afull = sym_to_full(a6)
    bfull = sym_to_full(b6)
    return np.einsum("...ik,...jl,...ij,...kl->...", ginv, ginv, afull, bfull)


def vec_dot(g6: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """g_ij v^i w^j for contravariant vectors."""
    return sym_quadform(g6, v, w)


def vec_norm(g6: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(sym_quadform(g6, v, v), 0.0))


def cross_metric(g6: np.ndarray, sqrt_det: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Metric cross product: contravariant vector g-orthogonal to a and b.

    (a x_g b)^i = g^{il} sqrt(det g) eps_ljk a^j b^k.  For g-orthonormal a, b
    the result is the g-unit vector completing a right-handed frame.
    """
    cov = np.cross(a, b) * sqrt_det[..., None]
    return sym_matvec(sym_inverse(g6), cov)


# ============================================================================
# Field containers
# ============================================================================

class FieldShapeError(ValueError):
    """Field values do not match the grid."""


def _check_shape(grid: Grid, values: np.ndarray, trailing: tuple, kind: str):
    expected = grid.dims + trailing
    if values.shape != expected:
        raise FieldShapeError(
            f"{kind} values must have shape {expected} on this grid, got {values.shape}")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        _check_shape(self.grid, self.values, (), "scalar")


@dataclass
class VectorField:
    """Contravariant vector components v^i."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        _check_shape(self.grid, self.values, (3,), "vector")


@dataclass
class SymTensorField:
    """Symmetric rank-2 covariant components in the order xx, xy, xz, yy, yz, zz."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        _check_shape(self.grid, self.values, (6,), "symmetric tensor")

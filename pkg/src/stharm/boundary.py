"""Geometry of the box boundary: per-face outward normals, induced metric,
second fundamental form, mean curvature, and quadrature weights, plus a
marching-squares tracer for level curves of u restricted to a face.

Each coordinate face S has covariant outward normal proportional to the
coordinate differential, so the coordinate tangent vectors of the face are
automatically g-orthogonal to the normal; the induced metric is the
restriction of g to the two tangential axes.  The sign convention makes the
second fundamental form B(X, Y) = <nabla_X eta, Y> with eta the outward
g-unit normal, so a convex boundary seen from inside has H_S > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fd
from .grid import FACE_AXIS_SIDE, FACES, SYM_INDEX, sym_matvec, tangent_axes
from .metric import MetricData

# ============================================================================
# Per-face geometry
# ============================================================================


@dataclass
class FaceGeometry:
    """Boundary geometry on the nodes of one face.

    Arrays are laid out over the face's two tangential axes in increasing
    axis order.  ``B`` holds the second fundamental form in coordinate
    tangent components: B[a, b] pairs the a-th and b-th tangential axes.
    """

    face: str
    axis: int
    side: int
    taxes: tuple
    eta: np.ndarray              # contravariant outward g-unit normal (f1, f2, 3)
    eta_cov: np.ndarray          # covariant components of the same (f1, f2, 3)
    gamma: np.ndarray            # induced metric (f1, f2, 2, 2)
    gamma_inv: np.ndarray
    sqrt_det_gamma: np.ndarray   # induced area density (f1, f2)
    B: np.ndarray                # second fundamental form (f1, f2, 2, 2)
    H_S: np.ndarray              # mean curvature trace(gamma^{-1} B) (f1, f2)
    quad_weights: np.ndarray     # trapezoid area weights, metric included (f1, f2)

    def b_form(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """B(V, W) for tangent vectors given by 3D contravariant components.

        Only the tangential components enter; any (discretization-level)
        normal component is projected away by construction.
        """
        t1, t2 = self.taxes
        v2 = np.stack([v[..., t1], v[..., t2]], axis=-1)
        w2 = np.stack([w[..., t1], w[..., t2]], axis=-1)
        return np.einsum("...ab,...a,...b->...", self.B, v2, w2)

    def tangent_projection(self, v: np.ndarray) -> np.ndarray:
        """Components of a 3D contravariant vector along the tangential axes."""
        t1, t2 = self.taxes
        return np.stack([v[..., t1], v[..., t2]], axis=-1)


def face_geometry(m: MetricData, face: str) -> FaceGeometry:
    """Compute FaceGeometry for one face of the grid."""
    grid = m.grid
    axis, side = FACE_AXIS_SIDE[face]
    sign = 1.0 if side == 1 else -1.0
    t1, t2 = tangent_axes(axis)
    sl = grid.face_node_slices(face)

    g6 = m.g.values[sl]
    ginv6 = m.g_inv.values[sl]

    # covariant outward normal ~ sign * dx^axis, normalized with g^{axis,axis}
    g_nn = ginv6[..., SYM_INDEX[(axis, axis)]]
    inv_norm = 1.0 / np.sqrt(g_nn)
    eta = np.stack([sign * ginv6[..., SYM_INDEX[(i, axis)]] * inv_norm
                    for i in range(3)], axis=-1)
    eta_cov = sym_matvec(g6, eta)

    gamma = np.empty(g6.shape[:-1] + (2, 2))
    for a, ta in enumerate((t1, t2)):
        for b, tb in enumerate((t1, t2)):
            gamma[..., a, b] = g6[..., SYM_INDEX[(ta, tb)]]
    det_gamma = (gamma[..., 0, 0] * gamma[..., 1, 1]
                 - gamma[..., 0, 1] * gamma[..., 1, 0])
    gamma_inv = np.empty_like(gamma)
    gamma_inv[..., 0, 0] = gamma[..., 1, 1]
    gamma_inv[..., 1, 1] = gamma[..., 0, 0]
    gamma_inv[..., 0, 1] = -gamma[..., 0, 1]
    gamma_inv[..., 1, 0] = -gamma[..., 1, 0]
    gamma_inv /= det_gamma[..., None, None]
    sqrt_det_gamma = np.sqrt(det_gamma)

    # B_ab = g_ib (d_a eta^i + Gamma^i_{a k} eta^k) with d_a tangential
    gamma_chr = m.christoffel_full[sl]            # (f1, f2, 3, 3, 3): Gamma^i_{jk}
    d_eta = [fd.face_deriv1(eta, grid, face, a) for a in range(2)]
    B = np.empty(g6.shape[:-1] + (2, 2))
    for a, ta in enumerate((t1, t2)):
        cov_d = d_eta[a] + np.einsum("...ik,...k->...i", gamma_chr[..., :, ta, :], eta)
        cov_d_low = sym_matvec(g6, cov_d)
        B[..., a, 0] = cov_d_low[..., t1]
        B[..., a, 1] = cov_d_low[..., t2]
    H_S = np.einsum("...ab,...ab->...", gamma_inv, B)

    w2 = np.ones(g6.shape[:-1])
    for ax2 in range(2):
        sl_lo = [slice(None)] * 2
        sl_hi = [slice(None)] * 2
        sl_lo[ax2], sl_hi[ax2] = 0, w2.shape[ax2] - 1
        w2[tuple(sl_lo)] *= 0.5
        w2[tuple(sl_hi)] *= 0.5
    quad = w2 * sqrt_det_gamma * grid.spacing[t1] * grid.spacing[t2]

    return FaceGeometry(face=face, axis=axis, side=side, taxes=(t1, t2),
                        eta=eta, eta_cov=eta_cov, gamma=gamma,
                        gamma_inv=gamma_inv, sqrt_det_gamma=sqrt_det_gamma,
                        B=B, H_S=H_S, quad_weights=quad)


def boundary_geometry(m: MetricData) -> dict:
    """FaceGeometry for all six faces."""
    return {face: face_geometry(m, face) for face in FACES}


def trace_p_on_face(fg: FaceGeometry, p6: np.ndarray) -> np.ndarray:
    """tr_S p = gamma^{ab} p_ab over the face's tangential axes."""
    t1, t2 = fg.taxes
    p2 = np.empty(p6.shape[:-1] + (2, 2))
    for a, ta in enumerate((t1, t2)):
        for b, tb in enumerate((t1, t2)):
            p2[..., a, b] = p6[..., SYM_INDEX[(ta, tb)]]
    return np.einsum("...ab,...ab->...", fg.gamma_inv, p2)


# ============================================================================
# Marching squares: level curves of u on a face
# ============================================================================

# Case table for a unit cell with corners 0:(0,0), 1:(1,0), 2:(1,1), 3:(0,1)
# and edges 0:(0-1), 1:(1-2), 2:(2-3), 3:(3-0).  A corner's bit is set when
# its value is below the iso level.  Saddles (cases 5 and 10) split on the
# cell-center average.
_MS_EDGE_CORNERS = np.array([[0, 1], [1, 2], [2, 3], [3, 0]], dtype=np.int64)
_MS_CORNER_OFFSETS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)
_MS_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
    11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
    5: None, 10: None,  # saddles, resolved at run time
}


def marching_squares(values: np.ndarray, iso: float) -> np.ndarray:
    """Segments of the iso-contour of a 2D node array, as (n, 2, 2) fractional
    index coordinates ordered so that higher values lie to the left of the
    segment direction.
    """
    v = np.asarray(values, dtype=np.float64)
    n1, n2 = v.shape
    below = v < iso
    case = (below[:-1, :-1].astype(np.int64)
            + 2 * below[1:, :-1]
            + 4 * below[1:, 1:]
            + 8 * below[:-1, 1:])
    segments = []
    corner_vals = np.stack([v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]],
                           axis=-1)
    cells = np.argwhere((case != 0) & (case != 15))
    for (i, j) in cells:
        c = case[i, j]
        vals = corner_vals[i, j]
        if c in (5, 10):
            center_below = vals.mean() < iso
            if c == 5:
                pairs = [(3, 0), (1, 2)] if center_below else [(3, 2), (1, 0)]
            else:
                pairs = [(0, 1), (2, 3)] if center_below else [(0, 3), (2, 1)]
        else:
            pairs = _MS_SEGMENTS[c]
        for (ea, eb) in pairs:
            pts = []
            for e in (ea, eb):
                ca, cb = _MS_EDGE_CORNERS[e]
                va, vb = vals[ca], vals[cb]
                t = (iso - va) / (vb - va)
                pa = _MS_CORNER_OFFSETS[ca]
                pb = _MS_CORNER_OFFSETS[cb]
                pts.append([i + pa[0] + t * (pb[0] - pa[0]),
                            j + pa[1] + t * (pb[1] - pa[1])])
            segments.append(pts)
    if not segments:
        return np.zeros((0, 2, 2))
    return np.asarray(segments, dtype=np.float64)


def interp_face_bilinear(face_values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a face node array (trailing component axes
    preserved) at fractional 2D index coordinates (n, 2)."""
    v = np.asarray(face_values, dtype=np.float64)
    scalar = v.ndim == 2
    if scalar:
        v = v[..., None]
    n1, n2 = v.shape[:2]
    p = np.asarray(pts, dtype=np.float64)
    x = np.clip(p[:, 0], 0.0, n1 - 1.0)
    y = np.clip(p[:, 1], 0.0, n2 - 1.0)
    i0 = np.minimum(x.astype(np.int64), n1 - 2)
    j0 = np.minimum(y.astype(np.int64), n2 - 2)
    fx = x - i0
    fy = y - j0
    out = ((1 - fx) * (1 - fy))[:, None] * v[i0, j0] \
        + (fx * (1 - fy))[:, None] * v[i0 + 1, j0] \
        + (fx * fy)[:, None] * v[i0 + 1, j0 + 1] \
        + ((1 - fx) * fy)[:, None] * v[i0, j0 + 1]
    return out[:, 0] if scalar else out

"""Independent reference values for the numeric suite.

Curvature oracles are derived with sympy from first principles (Christoffel
symbols of an explicit metric, shape operators of explicit level sets) and
lambdified, so every finite-difference pipeline in the package is compared
against a symbolically exact route.  Frozen constants at the bottom are
short hand computations for the built-in scenarios; each derivation is
reproduced in the comment next to the value.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import sympy as sp

XYZ = sp.symbols("x y z", real=True, positive=False)


# ---------------------------------------------------------------------------
# Symbolic Riemannian machinery
# ---------------------------------------------------------------------------


def christoffel(g: sp.Matrix):
    """Second-kind Christoffel symbols Gamma[k][i][j] of a 3x3 metric."""
    ginv = g.inv()
    gamma = [[[sp.S.Zero] * 3 for _ in range(3)] for _ in range(3)]
    for k in range(3):
        for i in range(3):
            for j in range(3):
                term = sp.S.Zero
                for l in range(3):
                    term += ginv[k, l] * (sp.diff(g[l, i], XYZ[j])
                                          + sp.diff(g[l, j], XYZ[i])
                                          - sp.diff(g[i, j], XYZ[l]))
                gamma[k][i][j] = term / 2
    return gamma


def ricci_tensor(g: sp.Matrix) -> sp.Matrix:
    """Ricci tensor from the curvature of the Levi-Civita connection."""
    gamma = christoffel(g)
    ric = sp.zeros(3, 3)
    for i in range(3):
        for j in range(3):
            term = sp.S.Zero
            for k in range(3):
                term += sp.diff(gamma[k][i][j], XYZ[k])
                term -= sp.diff(gamma[k][i][k], XYZ[j])
                for l in range(3):
                    term += gamma[k][k][l] * gamma[l][i][j]
                    term -= gamma[k][j][l] * gamma[l][i][k]
            ric[i, j] = term
    return ric


def scalar_curvature(g: sp.Matrix):
    ginv = g.inv()
    ric = ricci_tensor(g)
    return sum(ginv[i, j] * ric[i, j] for i in range(3) for j in range(3))


def lambdify(expr):
    """Vectorized (x, y, z) callable for a scalar sympy expression."""
    return sp.lambdify(XYZ, expr, modules="numpy")


# ---------------------------------------------------------------------------
# Conformal metrics g = phi^4 delta
# ---------------------------------------------------------------------------


def conformal_metric(phi) -> sp.Matrix:
    return sp.eye(3) * phi ** 4


def conformal_scalar_closed_form(phi):
    """R = -8 phi^-5 (flat Laplacian of phi) for g = phi^4 delta."""
    lap = sum(sp.diff(phi, v, 2) for v in XYZ)
    return -8 * lap / phi ** 5


_FACE_AXIS_SIGN = {"xlo": (0, -1), "xhi": (0, 1), "ylo": (1, -1),
                   "yhi": (1, 1), "zlo": (2, -1), "zhi": (2, 1)}


def conformal_face_mean_curvature(phi, face: str):
    """H of the coordinate plane carrying ``face`` in g = phi^4 delta,
    with respect to the outward unit normal.

    Rescaling a flat plane by e^{2 omega} (omega = 2 ln phi) gives
    H = e^{-omega} (0 + 2 d_n omega) = 4 phi^-3 d_n phi, n the outward
    Euclidean normal direction.
    """
    axis, sign = _FACE_AXIS_SIGN[face]
    return 4 * sign * sp.diff(phi, XYZ[axis]) / phi ** 3


def conformal_plane_gauss_curvature(phi, axis: int):
    """Gauss curvature of a coordinate plane normal to ``axis``.

    The induced metric is phi^4 (the flat 2D metric), i.e. conformal flat
    with omega = 2 ln phi, whose curvature is -e^{-2 omega} Lap_2 omega
    = -2 phi^-4 Lap_2 ln phi (Lap_2 over the in-plane coordinates).
    """
    tangents = [v for i, v in enumerate(XYZ) if i != axis]
    lap2 = sum(sp.diff(sp.log(phi), v, 2) for v in tangents)
    return -2 * lap2 / phi ** 4


# ---------------------------------------------------------------------------
# Flat-metric level-set geometry of an explicit function
# ---------------------------------------------------------------------------


def flat_level_set_curvatures(u):
    """(H, K) of the level sets of u in flat space, as sympy expressions.

    A = (projected Hessian)/|grad u| with nu = grad u/|grad u|; H = tr A;
    K = (H^2 - |A|^2)/2, which is the traced Gauss relation with a flat
    ambient space.
    """
    du = sp.Matrix([sp.diff(u, v) for v in XYZ])
    gn = sp.sqrt(du.dot(du))
    nu = du / gn
    hess = sp.hessian(u, XYZ)
    proj = sp.eye(3) - nu * nu.T
    shape = (proj * hess * proj) / gn
    mean = sp.trace(shape)
    a2 = sp.trace(shape * shape)
    gauss = (mean ** 2 - a2) / 2
    return mean, gauss


# ---------------------------------------------------------------------------
# Built-in scenario expressions (kept in lockstep with the catalog)
# ---------------------------------------------------------------------------


def phi_schwarzschild():
    x, y, z = XYZ
    r = sp.sqrt(x * x + y * y + z * z)
    return 1 + sp.Rational(1, 2) / r


def phi_conformal_faces():
    x, y, z = XYZ
    h = sp.Rational(1, 2)
    r2 = (x - h) ** 2 + (y - h) ** 2 + (z - h) ** 2
    return 1 + sp.Rational(1, 10) * r2


def u_sine_product():
    x, y, z = XYZ
    return sp.sin(sp.pi * x) * sp.sin(sp.pi * y) * sp.sin(sp.pi * z)


def u_radial_sq():
    x, y, z = XYZ
    h = sp.Rational(1, 2)
    return (x - h) ** 2 + (y - h) ** 2 + (z - h) ** 2


def u_exp_profile(rate=1):
    x, _, _ = XYZ
    return (sp.exp(rate * x) - 1) / (sp.exp(sp.Integer(rate)) - 1)


@functools.lru_cache(maxsize=None)
def conformal_curvature_fns(which: str):
    """Lambdified (ricci_fn, scalar_fn) for a named conformal factor.

    ricci_fn returns the 6 independent components in the package's
    symmetric-storage order (xx, xy, xz, yy, yz, zz).
    """
    phi = {"schwarzschild": phi_schwarzschild,
           "conformal-faces": phi_conformal_faces}[which]()
    g = conformal_metric(phi)
    ric = ricci_tensor(g)
    comps = [ric[0, 0], ric[0, 1], ric[0, 2], ric[1, 1], ric[1, 2], ric[2, 2]]
    ric_fn = sp.lambdify(XYZ, comps, modules="numpy")
    scal_fn = lambdify(scalar_curvature(g))
    return ric_fn, scal_fn


# ---------------------------------------------------------------------------
# Frozen hand computations for the built-in scenarios
# ---------------------------------------------------------------------------

# trace-matched: u = x stays exact because the pure-trace data cancels in
# the equation.  Boundary side: d_eta|grad u| = 0 and p(grad u, eta) = +c
# on x=1, -c on x=0, so the total boundary integral is 0.  Bulk side per
# unit volume: half |p|^2 = 3c^2/2 * ... wait through the five terms:
#   squared-Hessian term  (1/2)|p|^2          = 0.015
#   energy term           (P^2 - |p|^2)/2     = 0.030
#   h-group               h^2 - 2hP           = -0.090
# (c = 0.1, P = 3c, h = 3c, |p|^2 = 3c^2) summing to -0.045 over the unit
# box.  Margin = lhs - rhs = 0.045.
TRACE_MATCHED_LHS = 0.0
TRACE_MATCHED_RHS = -0.045
TRACE_MATCHED_MARGIN = 0.045
# Bulk sufficiency evaluator on the same data: mu - |J| + h^2 - 2hP - 2|dh|
# = 0.03 + 0.09 - 0.18 = -6 c^2.
TRACE_MATCHED_CONDITION1 = -0.06

# quasi-1d-exponential (h = 1): u = (e^x - 1)/(e - 1), u'' = u'.
# lhs = u''(1) - u''(0) = (e - 1)/(e - 1) = 1.  Bulk integrand with the
# statement's h-group: u''^2/(2 u'^2) + h^2 = 1/2 + 1 = 3/2; the
# derivation-weight group (h^2/2) gives exactly lhs.
QUASI1D_LHS = 1.0
QUASI1D_RHS_STATEMENT = 1.5
QUASI1D_RHS_DERIVATION = 1.0

# neumann-slab (h = 1/2): same profile with rate 1/2;
# lhs = u''(1) - u''(0) = (1/2) (u'(1) - u'(0)) = 1/4;
# statement-weight bulk = h^2/2 + h^2 = 3/8; derivation weight = 1/4.
SLAB_LHS = 0.25
SLAB_RHS_STATEMENT = 0.375
SLAB_RHS_DERIVATION = 0.25
# Boundary convexity evaluator there: H - |tr p - h| = 0 - 1/2.
SLAB_CONDITION3 = -0.5

# radial-spheres: u = |x - c|^2, level t is the sphere of radius sqrt(t):
# area 4 pi t, H = 2/sqrt(t), K = 1/t, |grad u| = 2 sqrt(t).
RADIAL_AREA = lambda t: 4.0 * math.pi * t          # noqa: E731
RADIAL_H = lambda t: 2.0 / math.sqrt(t)            # noqa: E731
RADIAL_K = lambda t: 1.0 / t                       # noqa: E731

# flat-linear boundary lemma example with pure-trace data: on x = 1 the
# lemma's two sides are both c (tr_S p = 2c on the plane, H = 0).
PURE_TRACE_FACE_VALUE = 0.1

"""Riemannian metric data on a grid: inverse, volume element, connection,
and curvature, all derived from nodal metric components by finite differences.

Curvature sign conventions: Ric_ij is the contraction R^k_{ikj} of the
curvature tensor with

    R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} + Gamma-quadratic terms,

so the round sphere has positive scalar curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fd
from .expressions import AnalyticExpr
from .grid import (Grid, ScalarField, SymTensorField, full_to_sym, sym_det,
                   sym_inverse, sym_to_full, sym_trace_with)


class MetricError(ValueError):
    """Metric values are not a valid Riemannian metric."""


@dataclass
class MetricData:
    """A metric with all derived nodal quantities used elsewhere.

    Attributes:
        g: covariant components g_ij.
        g_inv: contravariant components g^ij.
        sqrt_det: sqrt(det g).
        christoffel: Gamma^k_ij as an (nx, ny, nz, 3, 6) array; leading tensor
            axis is k, trailing axis is the symmetric pair (ij) in the usual
            xx, xy, xz, yy, yz, zz order (18 independent values per node).
        ricci: Ric_ij.
        scalar_curv: R = g^ij Ric_ij.
    """

    grid: Grid
    g: SymTensorField
    g_inv: SymTensorField
    sqrt_det: ScalarField
    christoffel: np.ndarray
    ricci: SymTensorField
    scalar_curv: ScalarField

    @property
    def christoffel_full(self) -> np.ndarray:
        """Gamma^k_ij expanded to (nx, ny, nz, 3, 3, 3) with axes (k, i, j)."""
        return sym_to_full(self.christoffel)


def _check_positive_definite(grid: Grid, g6: np.ndarray):
    a = g6[..., 0]
    minor2 = g6[..., 0] * g6[..., 3] - g6[..., 1] ** 2
    det = sym_det(g6)
    for name, minor in (("g_xx", a), ("2x2 leading minor", minor2), ("det g", det)):
        bad = np.argwhere(minor <= 0.0)
        if bad.size:
            i, j, k = bad[0]
            raise MetricError(
                f"metric is not positive definite: {name} = {minor[i, j, k]:.6g} <= 0 "
                f"at node ({i}, {j}, {k})")


def build_metric(grid: Grid, g_values: np.ndarray) -> MetricData:
    """Construct MetricData from nodal covariant components (nx, ny, nz, 6).

    Rejects non-positive-definite input, naming the first offending node.
    Connection and curvature come from finite differences of the components:
    Gamma from first derivatives of g, Ricci from first derivatives of Gamma.
    """
    g6 = np.ascontiguousarray(g_values, dtype=np.float64)
    if g6.shape != grid.dims + (6,):
        raise MetricError(f"metric components must have shape {grid.dims + (6,)}, "
                          f"got {g6.shape}")
    _check_positive_definite(grid, g6)

    det = sym_det(g6)
    ginv6 = sym_inverse(g6, det)
    sqrt_det = np.sqrt(det)

    # dg[..., k, i, j] = d_k g_ij
    dg6 = np.stack([fd.deriv1(g6, a, grid.spacing[a]) for a in range(3)], axis=-2)
    dg = sym_to_full(dg6)

    # Gamma_{l,ij} = (d_i g_lj + d_j g_li - d_l g_ij) / 2, then raise l.
    lower = 0.5 * (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg)
                   - np.einsum("...lij->...lij", dg))
    ginv = sym_to_full(ginv6)
    gamma = np.einsum("...kl,...lij->...kij", ginv, lower)
    gamma6 = full_to_sym(gamma)

    # dGamma[..., m, k, i, j] = d_m Gamma^k_ij
    dgamma6 = np.stack([fd.deriv1(gamma6, a, grid.spacing[a]) for a in range(3)], axis=-3)
    dgamma = sym_to_full(dgamma6)

    # Ric_ij = d_k Gamma^k_ij - d_(j Gamma^k_i)k + Gamma^k_kl Gamma^l_ij
    #          - Gamma^k_jl Gamma^l_ik, with the second term symmetrized
    # (its two index orders agree analytically but not discretely).
    term1 = np.einsum("...kkij->...ij", dgamma)
    dcontr = np.einsum("...mkik->...mi", dgamma)  # d_m (Gamma^k_ik)
    term2 = 0.5 * (np.einsum("...ji->...ij", dcontr) + np.einsum("...ij->...ij", dcontr))
    contr = np.einsum("...kkl->...l", gamma)      # Gamma^k_kl
    term3 = np.einsum("...l,...lij->...ij", contr, gamma)
    term4 = np.einsum("...kjl,...lik->...ij", gamma, gamma)
    ric = term1 - term2 + term3 - term4
    ric6 = full_to_sym(ric)

    scal = sym_trace_with(ginv6, ric6)

    return MetricData(
        grid=grid,
        g=SymTensorField(grid, g6),
        g_inv=SymTensorField(grid, ginv6),
        sqrt_det=ScalarField(grid, sqrt_det),
        christoffel=np.ascontiguousarray(gamma6),
        ricci=SymTensorField(grid, ric6),
        scalar_curv=ScalarField(grid, scal),
    )


# ============================================================================
# Metric families
# ============================================================================

def _as_values(grid: Grid, spec) -> np.ndarray:
    if isinstance(spec, AnalyticExpr):
        return spec.evaluate_on(grid)
    if callable(spec):
        x, y, z = grid.coords()
        return np.broadcast_to(np.asarray(spec(x, y, z), dtype=np.float64), grid.dims).copy()
    return np.broadcast_to(np.asarray(spec, dtype=np.float64), grid.dims).copy()


def metric_flat(grid: Grid) -> MetricData:
    """The Euclidean metric."""
    return metric_constant(grid, (1.0, 0.0, 0.0, 1.0, 0.0, 1.0))


def metric_constant(grid: Grid, components) -> MetricData:
    """A constant (node-independent) metric from 6 components."""
    comps = np.asarray(components, dtype=np.float64)
    if comps.shape != (6,):
        raise MetricError(f"constant metric needs 6 components, got shape {comps.shape}")
    g6 = np.broadcast_to(comps, grid.dims + (6,)).copy()
    return build_metric(grid, g6)


def metric_diagonal(grid: Grid, entries) -> MetricData:
    """Diagonal metric diag(f1, f2, f3) from three scalar profiles."""
    if len(entries) != 3:
        raise MetricError(f"diagonal metric needs 3 entries, got {len(entries)}")
    g6 = np.zeros(grid.dims + (6,))
    for slot, spec in zip((0, 3, 5), entries):
        g6[..., slot] = _as_values(grid, spec)
    return build_metric(grid, g6)


def metric_conformal(grid: Grid, phi) -> MetricData:
    """Conformally flat metric phi^4 * delta from a conformal factor profile."""
    phi_vals = _as_values(grid, phi)
    if np.any(phi_vals <= 0):
        bad = np.argwhere(phi_vals <= 0)[0]
        raise MetricError(f"conformal factor must be positive; phi = "
                          f"{phi_vals[tuple(bad)]:.6g} at node {tuple(bad)}")
    g6 = np.zeros(grid.dims + (6,))
    w = phi_vals ** 4
    g6[..., 0] = w
    g6[..., 3] = w
    g6[..., 5] = w
    return build_metric(grid, g6)

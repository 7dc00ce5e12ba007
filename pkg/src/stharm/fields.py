"""Initial-data fields over a metric: the symmetric tensor p, the scalar h,
and the derived energy and momentum densities

    2 mu = R + (tr_g p)^2 - |p|_g^2,      J = div_g(p - (tr_g p) g).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fd
from .grid import (ScalarField, SymTensorField, VectorField, sym_matvec,
                   sym_norm2_with, sym_trace_with)
from .metric import MetricData


@dataclass
class InitialDataFields:
    """p, h, and everything derived from them on a fixed metric."""

    p: SymTensorField
    trace_p: ScalarField      # P = g^{ij} p_ij
    h: ScalarField
    dh: np.ndarray            # covariant d_i h, (..., 3)
    grad_h_norm: ScalarField  # |grad h|_g
    mu: ScalarField
    J: VectorField            # contravariant J^i


def energy_momentum(m: MetricData, p: SymTensorField) -> tuple[ScalarField, VectorField]:
    """Energy density mu and momentum density J of (g, p).

    mu is pointwise (R + P^2 - |p|^2)/2; J is the covariant divergence of
    p - P g with the index raised.
    """
    from .calculus import div_sym_tensor  # local import to avoid a cycle

    trace_p = sym_trace_with(m.g_inv.values, p.values)
    p_norm2 = sym_norm2_with(m.g_inv.values, p.values)
    mu = 0.5 * (m.scalar_curv.values + trace_p ** 2 - p_norm2)

    shifted = SymTensorField(m.grid, p.values - trace_p[..., None] * m.g.values)
    j_cov = div_sym_tensor(shifted, m)
    j = sym_matvec(m.g_inv.values, j_cov)
    return ScalarField(m.grid, mu), VectorField(m.grid, j)


def make_initial_data(m: MetricData, p_values, h_values) -> InitialDataFields:
    """Assemble InitialDataFields from nodal p (..., 6) and h (...).

    A scalar ``p_values`` c is shorthand for the pure-trace tensor c * g;
    a scalar ``h_values`` is broadcast to a constant field.
    """
    grid = m.grid
    if np.isscalar(p_values):
        p_values = float(p_values) * m.g.values
    if np.isscalar(h_values):
        h_values = np.full(grid.dims, float(h_values))
    p = SymTensorField(grid, p_values)
    h = ScalarField(grid, h_values)
    trace_p = ScalarField(grid, sym_trace_with(m.g_inv.values, p.values))
    dh = fd.grad_components(h.values, grid)
    grad_h = sym_matvec(m.g_inv.values, dh)
    grad_h_norm = ScalarField(grid, np.sqrt(np.maximum(np.sum(grad_h * dh, axis=-1), 0.0)))
    mu, j = energy_momentum(m, p)
    return InitialDataFields(p=p, trace_p=trace_p, h=h, dh=dh,
                             grad_h_norm=grad_h_norm, mu=mu, J=j)

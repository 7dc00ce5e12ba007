"""Covariant differential operators on node fields, and the bundle of
derived nodal fields shared by the level-set and verification machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fd
from .fields import InitialDataFields
from .grid import (Grid, ScalarField, SymTensorField, VectorField, sym_matvec,
                   sym_quadform, sym_to_full, sym_trace_with)
from .metric import MetricData


def gradient(u: ScalarField, m: MetricData) -> tuple[VectorField, ScalarField]:
    """Nodal gradient: contravariant components g^{ij} d_j u and the norm |grad u|_g."""
    du = fd.grad_components(u.values, m.grid)
    grad = sym_matvec(m.g_inv.values, du)
    norm = np.sqrt(np.maximum(np.sum(grad * du, axis=-1), 0.0))
    return VectorField(m.grid, grad), ScalarField(m.grid, norm)


def hessian(u: ScalarField, m: MetricData) -> SymTensorField:
    """Covariant Hessian: d_i d_j u - Gamma^k_ij d_k u."""
    du = fd.grad_components(u.values, m.grid)
    d2 = fd.second_derivs_sym(u.values, m.grid)
    correction = np.einsum("...ka,...k->...a", m.christoffel, du)
    return SymTensorField(m.grid, d2 - correction)


def laplacian_trace(hess: SymTensorField, m: MetricData) -> ScalarField:
    """Laplace-Beltrami value as the metric trace of the Hessian."""
    return ScalarField(m.grid, sym_trace_with(m.g_inv.values, hess.values))


def spacetime_hessian(u: ScalarField, m: MetricData, idf: InitialDataFields) -> SymTensorField:
    """Hessian of u plus p |grad u|_g (the second-fundamental-form shift)."""
    hess = hessian(u, m)
    _, norm = gradient(u, m)
    return SymTensorField(m.grid, hess.values + idf.p.values * norm.values[..., None])


def div_sym_tensor(t: SymTensorField, m: MetricData) -> np.ndarray:
    """Covariant divergence (div T)_j = g^{kl} (d_k T_lj - Gamma^m_kl T_mj
    - Gamma^m_kj T_lm), returned as covariant components (..., 3)."""
    grid = m.grid
    tfull = sym_to_full(t.values)
    dt = np.stack([fd.deriv1(tfull, a, grid.spacing[a]) for a in range(3)], axis=-3)
    gamma = m.christoffel_full
    ginv = sym_to_full(m.g_inv.values)
    term1 = np.einsum("...kl,...klj->...j", ginv, dt)
    term2 = np.einsum("...kl,...mkl,...mj->...j", ginv, gamma, tfull)
    term3 = np.einsum("...kl,...mkj,...lm->...j", ginv, gamma, tfull)
    return term1 - term2 - term3


@dataclass
class DerivedFields:
    """All nodal fields derived from (u, metric, initial data) in one place.

    The level-set extractor interpolates these at triangle centroids and the
    verification checks consume them directly, so every consumer sees the
    same arithmetic.
    """

    grid: Grid
    u: np.ndarray
    du: np.ndarray          # covariant d_i u, (..., 3)
    grad: np.ndarray        # contravariant grad^i u, (..., 3)
    gradnorm: np.ndarray    # |grad u|_g
    hess: np.ndarray        # covariant Hessian, (..., 6)
    sthess: np.ndarray      # Hessian + p |grad u|, (..., 6)
    lap_u: np.ndarray       # g^{ij} Hess_ij
    d_gradnorm: np.ndarray  # finite-difference d_i |grad u|, (..., 3)

    @classmethod
    def build(cls, u: ScalarField, m: MetricData,
              idf: InitialDataFields | None = None) -> "DerivedFields":
        grid = m.grid
        du = fd.grad_components(u.values, grid)
        grad = sym_matvec(m.g_inv.values, du)
        gradnorm = np.sqrt(np.maximum(np.sum(grad * du, axis=-1), 0.0))
        hess = hessian(u, m).values
        if idf is not None:
            sthess = hess + idf.p.values * gradnorm[..., None]
        else:
            sthess = hess.copy()
        lap_u = sym_trace_with(m.g_inv.values, hess)
        d_gradnorm = fd.grad_components(gradnorm, grid)
        return cls(grid=grid, u=u.values, du=du, grad=grad, gradnorm=gradnorm,
                   hess=hess, sthess=sthess, lap_u=lap_u, d_gradnorm=d_gradnorm)

    def interp_table(self, m: MetricData, idf: InitialDataFields | None = None) -> dict:
        """Nodal arrays to interpolate at level-set triangle centroids."""
        table = {
            "u": self.u,
            "du": self.du,
            "grad": self.grad,
            "gradnorm": self.gradnorm,
            "hess": self.hess,
            "sthess": self.sthess,
            "lap_u": self.lap_u,
            "d_gradnorm": self.d_gradnorm,
            "g": m.g.values,
            "ricci": m.ricci.values,
            "scalar_curv": m.scalar_curv.values,
            "sqrt_det": m.sqrt_det.values,
        }
        if idf is not None:
            table.update({
                "p": idf.p.values,
                "trace_p": idf.trace_p.values,
                "h": idf.h.values,
                "dh": idf.dh,
                "mu": idf.mu.values,
                "J": idf.J.values,
            })
        return table


def nu_vector(df: DerivedFields, floor: float = 1e-300) -> np.ndarray:
    """Contravariant unit normal grad u / |grad u| (unsafe where the norm
    vanishes; callers mask by a regularity threshold)."""
    return df.grad / np.maximum(df.gradnorm, floor)[..., None]


def hess_nu(df: DerivedFields, m: MetricData) -> np.ndarray:
    """Hess(nu, nu) nodal, with nu = grad u / |grad u|."""
    nu = nu_vector(df)
    return sym_quadform(df.hess, nu)

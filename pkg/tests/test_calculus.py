"""Covariant operators against symbolic references and exact invariants."""

from __future__ import annotations

import numpy as np
import pytest
import sympy as sp

import oracles
from oracles import XYZ
from stharm import fd
from stharm.calculus import (DerivedFields, div_sym_tensor, gradient, hessian,
                             hess_nu, laplacian_trace, nu_vector,
                             spacetime_hessian)
from stharm.fields import make_initial_data
from stharm.grid import Grid, ScalarField, SymTensorField, full_to_sym
from stharm.metric import metric_conformal, metric_flat


def unit_grid(n=17) -> Grid:
    return Grid.from_box((n, n, n), [[0, 1]] * 3)


PHI = oracles.phi_conformal_faces()
U_EXPR = sp.sin(XYZ[0]) * sp.cos(XYZ[1]) + XYZ[2] ** 2 + XYZ[0] * XYZ[1]


def _symbolic_covariant_fields():
    """Lambdified covariant Hessian components, Laplacian and gradient norm
    of U_EXPR under g = PHI^4 delta."""
    g = oracles.conformal_metric(PHI)
    ginv = g.inv()
    gamma = oracles.christoffel(g)
    du = [sp.diff(U_EXPR, v) for v in XYZ]
    hess = sp.hessian(U_EXPR, XYZ)
    cov = sp.zeros(3, 3)
    for i in range(3):
        for j in range(3):
            cov[i, j] = hess[i, j] - sum(gamma[k][i][j] * du[k] for k in range(3))
    comps = [cov[0, 0], cov[0, 1], cov[0, 2], cov[1, 1], cov[1, 2], cov[2, 2]]
    lap = sum(ginv[i, j] * cov[i, j] for i in range(3) for j in range(3))
    gn2 = sum(ginv[i, j] * du[i] * du[j] for i in range(3) for j in range(3))
    return (sp.lambdify(XYZ, comps, modules="numpy"),
            oracles.lambdify(lap),
            oracles.lambdify(sp.sqrt(gn2)))


def _numeric_setup(n):
    g = unit_grid(n)
    X, Y, Z = g.coords()
    phi_fn = oracles.lambdify(PHI)
    u_fn = oracles.lambdify(U_EXPR)
    m = metric_conformal(g, phi_fn(X, Y, Z))
    u = ScalarField(g, u_fn(X, Y, Z))
    return g, m, u, (X, Y, Z)


def test_covariant_hessian_laplacian_gradnorm_match_symbolic():
    hess_fn, lap_fn, gn_fn = _symbolic_covariant_fields()
    errs = []
    for n in (17, 33):
        g, m, u, (X, Y, Z) = _numeric_setup(n)
        inner = g.interior_slices(margin=2)
        hess = hessian(u, m).values
        hess_exact = np.stack(np.broadcast_arrays(*hess_fn(X, Y, Z)), axis=-1)
        lap = laplacian_trace(hessian(u, m), m).values
        _, gn = gradient(u, m)
        e = max(np.abs(hess - hess_exact)[inner].max(),
                np.abs(lap - lap_fn(X, Y, Z))[inner].max(),
                np.abs(gn.values - gn_fn(X, Y, Z))[inner].max())
        errs.append(e)
    order = np.log(errs[0] / errs[1]) / np.log(2.0)
    assert order >= 1.8, (errs, order)
    assert errs[-1] < 5e-4


def test_flat_metric_reduces_to_plain_derivatives():
    g, _ = unit_grid(13), None
    m = metric_flat(g)
    X, Y, Z = g.coords()
    u = ScalarField(g, np.sin(X) * Y + Z * Z)
    grad, gn = gradient(u, m)
    du = fd.grad_components(u.values, g)
    np.testing.assert_allclose(grad.values, du, atol=0)
    np.testing.assert_allclose(gn.values, np.linalg.norm(du, axis=-1),
                               rtol=1e-13)
    hess = hessian(u, m).values
    np.testing.assert_allclose(hess, fd.second_derivs_sym(u.values, g), atol=0)
    lap = laplacian_trace(hessian(u, m), m).values
    np.testing.assert_allclose(lap, hess[..., 0] + hess[..., 3] + hess[..., 5],
                               atol=1e-13)


def test_derived_fields_internal_consistency():
    g, m, u, _ = _numeric_setup(13)
    p_vals = 0.2 * m.g.values
    idf = make_initial_data(m, p_vals, 0.3)
    df = DerivedFields.build(u, m, idf)
    np.testing.assert_allclose(df.gradnorm ** 2,
                               np.sum(df.grad * df.du, axis=-1),
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(df.sthess - df.hess,
                               p_vals * df.gradnorm[..., None], atol=1e-14)
    np.testing.assert_allclose(
        df.lap_u, laplacian_trace(hessian(u, m), m).values, atol=0)
    np.testing.assert_allclose(
        df.sthess, spacetime_hessian(u, m, idf).values, atol=1e-14)
    nu = nu_vector(df)
    hnn = hess_nu(df, m)
    alive = df.gradnorm > 1e-8
    np.testing.assert_allclose(
        np.where(alive, np.sum(nu * df.du, axis=-1) / np.maximum(df.gradnorm, 1e-300), 1.0),
        1.0, rtol=1e-10)
    # Hess(nu, nu) recomputed directly
    from stharm.grid import sym_quadform
    np.testing.assert_allclose(hnn, sym_quadform(df.hess, nu), atol=0)


def test_divergence_of_metric_vanishes():
    # covariant compatibility: div_g g = 0 for any metric
    g, m, _, _ = _numeric_setup(17)
    div = div_sym_tensor(m.g, m)
    inner = g.interior_slices(margin=2)
    assert np.abs(div[inner]).max() < 1e-10


def test_divergence_of_scalar_times_metric_is_gradient():
    # (div f g)_j = d_j f; exercises every Christoffel contraction
    errs = []
    for n in (17, 33):
        g, m, _, (X, Y, Z) = _numeric_setup(n)
        f = np.sin(X) * np.cos(Y) + 0.5 * Z ** 2
        t = SymTensorField(g, f[..., None] * m.g.values)
        div = div_sym_tensor(t, m)
        df_exact = np.stack([np.cos(X) * np.cos(Y),
                             -np.sin(X) * np.sin(Y),
                             np.broadcast_to(Z, X.shape)], axis=-1)
        inner = g.interior_slices(margin=2)
        errs.append(np.abs(div - df_exact)[inner].max())
    order = np.log(errs[0] / errs[1]) / np.log(2.0)
    assert order >= 1.8, (errs, order)
    assert errs[-1] < 1e-3


def test_divergence_flat_constant_tensor_vanishes():
    g = unit_grid(9)
    m = metric_flat(g)
    t6 = np.broadcast_to(np.array([1.0, 0.2, -0.1, 2.0, 0.4, 0.5]),
                         g.dims + (6,))
    div = div_sym_tensor(SymTensorField(g, np.ascontiguousarray(t6)), m)
    np.testing.assert_allclose(div, 0.0, atol=1e-12)


def test_energy_momentum_hand_values():
    # pure-trace data p = c g on a flat box: P = 3c, |p|^2 = 3c^2,
    # mu = (9c^2 - 3c^2)/2 = 3c^2, J = div(p - P g) = 0
    g = unit_grid(9)
    m = metric_flat(g)
    c = 0.1
    idf = make_initial_data(m, c * m.g.values, 3 * c)
    np.testing.assert_allclose(idf.trace_p.values, 3 * c, rtol=1e-12)
    np.testing.assert_allclose(idf.mu.values, 3 * c * c, rtol=1e-10)
    inner = g.interior_slices(margin=1)
    assert np.abs(idf.J.values[inner]).max() < 1e-11

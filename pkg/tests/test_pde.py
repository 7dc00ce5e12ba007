"""Nonlinear solver: exactness, closed-form convergence, and invariants."""

from __future__ import annotations

import numpy as np
import pytest

from stharm.calculus import gradient, hessian, laplacian_trace
from stharm.fields import make_initial_data
from stharm.grid import FACES, Grid
from stharm.metric import metric_constant, metric_flat
from stharm.pde import (BoundaryCondition, BoundarySpec, PicardStallError,
                        SingularOperatorError, SolverConfig, SolverError,
                        solve)


def flat_setup(n=17, box=((0, 1), (0, 1), (0, 1)), h=0.0):
    g = Grid.from_box((n, n, n), box)
    m = metric_flat(g)
    idf = make_initial_data(m, np.zeros(g.dims + (6,)), h)
    return g, m, idf


def dirichlet_everywhere(value) -> BoundarySpec:
    return BoundarySpec({f: BoundaryCondition.dirichlet(value) for f in FACES})


def exp_profile(a):
    return lambda x, y, z: np.expm1(a * x) / np.expm1(a)


# ---------------------------------------------------------------------------
# Exactness and reference convergence
# ---------------------------------------------------------------------------


def test_linear_data_is_reproduced_exactly():
    # centered differences annihilate affine fields, so u = x is a discrete
    # solution and the first linear solve lands on it
    g, m, idf = flat_setup(17)
    res = solve(m, idf, dirichlet_everywhere(lambda x, y, z: x))
    X, _, _ = g.coords()
    np.testing.assert_allclose(res.u.values, X, atol=5e-11)
    assert res.converged
    # linear-solve tolerance amplified by the 1/dx^2 scale of the operator
    assert res.residual_max < 1e-7


def test_quasi_1d_closed_form():
    # h = 1 drives u'' = u' whose box solution is the exponential profile
    g, m, idf = flat_setup(33, h=1.0)
    cfg = SolverConfig(delta_schedule=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10))
    res = solve(m, idf, dirichlet_everywhere(exp_profile(1.0)), cfg)
    X, _, _ = g.coords()
    exact = exp_profile(1.0)(X, None, None)
    assert np.abs(res.u.values - exact).max() < 1e-4


def test_closed_form_error_second_order():
    errs = []
    for n in (9, 17, 33):
        g, m, idf = flat_setup(n, h=1.0)
        cfg = SolverConfig(delta_schedule=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10))
        res = solve(m, idf, dirichlet_everywhere(exp_profile(1.0)), cfg)
        X, _, _ = g.coords()
        errs.append(np.abs(res.u.values - exp_profile(1.0)(X, None, None)).max())
    order = np.log(errs[0] / errs[2]) / np.log(4.0)
    assert order >= 1.9, (errs, order)


# ---------------------------------------------------------------------------
# Invariants
# ---------------------------------------------------------------------------


def test_determinism_bitwise():
    _, m, idf = flat_setup(13, h=0.5)
    bc = dirichlet_everywhere(exp_profile(0.5))
    u1 = solve(m, idf, bc).u.values
    u2 = solve(m, idf, bc).u.values
    assert np.array_equal(u1, u2)


def test_linear_superposition():
    # with h = 0 and p = 0 the equation is linear; solutions add
    g, m, idf = flat_setup(13)
    f1 = lambda x, y, z: x * x - 0.5 * (y * y + z * z)   # noqa: E731  harmonic
    f2 = lambda x, y, z: x * y + 0.3 * z                 # noqa: E731  harmonic
    u1 = solve(m, idf, dirichlet_everywhere(f1)).u.values
    u2 = solve(m, idf, dirichlet_everywhere(f2)).u.values
    u12 = solve(m, idf, dirichlet_everywhere(
        lambda x, y, z: f1(x, y, z) + f2(x, y, z))).u.values
    np.testing.assert_allclose(u12, u1 + u2, atol=1e-8)


def test_translation_equivariance_same_face_data():
    # identical stencils and identical boundary arrays on a shifted box must
    # reproduce the same iteration bit for bit
    results = []
    for shift in (0.0, 0.5):
        box = [[shift, 1 + shift], [0, 1], [0, 1]]
        g, m, idf = flat_setup(13, box=box, h=0.5)
        faces = {}
        for face in FACES:
            shape = g.face_shape(face)
            t = np.linspace(0.0, 1.0, shape[0])[:, None]
            s = np.linspace(0.0, 1.0, shape[1])[None, :]
            faces[face] = BoundaryCondition.dirichlet(
                np.ascontiguousarray(0.3 * t + 0.1 * s))
        res = solve(m, idf, BoundarySpec(faces))
        results.append(res.u.values)
    assert np.array_equal(results[0], results[1])


def test_shifted_dirichlet_data_shifts_solution():
    # adding a constant to all boundary data adds the same constant
    _, m, idf = flat_setup(13, h=0.5)
    base = solve(m, idf, dirichlet_everywhere(exp_profile(0.5))).u.values
    lifted = solve(m, idf, dirichlet_everywhere(
        lambda x, y, z: exp_profile(0.5)(x, y, z) + 2.0)).u.values
    np.testing.assert_allclose(lifted, base + 2.0, atol=1e-9)


def test_dirichlet_values_honored_exactly():
    g, m, idf = flat_setup(13, h=1.0)
    res = solve(m, idf, dirichlet_everywhere(exp_profile(1.0)))
    X, _, _ = g.coords()
    exact = exp_profile(1.0)(X, None, None)
    for face in FACES:
        sl = g.face_node_slices(face)
        np.testing.assert_allclose(res.u.values[sl], exact[sl], atol=1e-13)


def test_neumann_faces_have_small_flux():
    g, m, idf = flat_setup(17, h=0.5)
    faces = {"xlo": BoundaryCondition.dirichlet(0.0),
             "xhi": BoundaryCondition.dirichlet(1.0)}
    for f in ("ylo", "yhi", "zlo", "zhi"):
        faces[f] = BoundaryCondition.neumann()
    res = solve(m, idf, BoundarySpec(faces))
    grad, _ = gradient(res.u, m)
    for f in ("ylo", "yhi", "zlo", "zhi"):
        axis = {"ylo": 1, "yhi": 1, "zlo": 2, "zhi": 2}[f]
        flux = grad.values[g.face_node_slices(f)][..., axis]
        assert np.abs(flux).max() < 1e-7, f


def test_equation_residual_small_after_convergence():
    g, m, idf = flat_setup(17, h=1.0)
    res = solve(m, idf, dirichlet_everywhere(exp_profile(1.0)))
    # recompute the strong residual Lap u - (h - P) |grad u| independently
    lap = laplacian_trace(hessian(res.u, m), m).values
    _, gn = gradient(res.u, m)
    strong = lap - 1.0 * gn.values
    inner = g.interior_slices(margin=1)
    assert np.abs(strong[inner]).max() < 1e-5
    assert res.residual_max < 1e-5


# ---------------------------------------------------------------------------
# Failure modes
# ---------------------------------------------------------------------------


def test_all_neumann_without_pin_is_singular():
    _, m, idf = flat_setup(9)
    bc = BoundarySpec({f: BoundaryCondition.neumann() for f in FACES})
    with pytest.raises(SingularOperatorError):
        solve(m, idf, bc)


def test_all_neumann_with_pin_solves():
    g, m, idf = flat_setup(9)
    bc = BoundarySpec({f: BoundaryCondition.neumann() for f in FACES},
                      pin_node=(4, 4, 4))
    res = solve(m, idf, bc)
    # h = 0, zero-flux everywhere: the solution is the pinned constant
    np.testing.assert_allclose(res.u.values, res.u.values[4, 4, 4], atol=1e-9)


def test_picard_stall_raises_with_state():
    _, m, idf = flat_setup(13, h=1.0)
    cfg = SolverConfig(max_picard_per_stage=1, picard_tol=1e-14)
    with pytest.raises(PicardStallError) as err:
        solve(m, idf, dirichlet_everywhere(exp_profile(1.0)), cfg)
    assert err.value.last_u.shape == (13, 13, 13)
    assert err.value.update > 0


def test_off_diagonal_metric_with_neumann_rejected():
    g = Grid.from_box((9, 9, 9), [[0, 1]] * 3)
    m = metric_constant(g, [1.0, 0.2, 0.0, 1.0, 0.0, 1.0])
    idf = make_initial_data(m, np.zeros(g.dims + (6,)), 0.0)
    faces = {f: BoundaryCondition.dirichlet(0.0) for f in FACES}
    faces["yhi"] = BoundaryCondition.neumann()
    with pytest.raises(SolverError):
        solve(m, idf, BoundarySpec(faces))


def test_boundary_condition_validation():
    with pytest.raises(ValueError):
        BoundaryCondition("robin", 1.0)
    with pytest.raises(ValueError):
        BoundaryCondition.dirichlet(None)
    with pytest.raises(ValueError):
        BoundaryCondition("neumann", 1.0)
    with pytest.raises(ValueError):
        BoundarySpec({"xlo": BoundaryCondition.neumann()})

"""Tests for the verification layer: boundary/bulk integrals of the main
inequality, the constant-face and zero-flux boundary lemmas, the pointwise
identity suite, the closing conditions, and report semantics.

Hand-checkable configurations are used throughout: linear fields on flat
metrics where every residual vanishes identically, pure-trace tensors where
both sides of the constant-face lemma reduce to the same constant, and
constant fields where the condition margins are simple arithmetic.
"""

import numpy as np
import pytest

import oracles
from stharm.boundary import boundary_geometry
from stharm.fields import make_initial_data
from stharm.grid import Grid, ScalarField
from stharm.levelset import regular_split
from stharm.metric import metric_conformal, metric_flat
from stharm.verify import (
    DEFAULT_TOLERANCES,
    PreconditionError,
    VerificationReport,
    _face_outward_deriv_skip,
    boundary_integral_lhs,
    bulk_integral_rhs,
    check_dirichlet_lemma,
    check_neumann_boundary_term,
    check_neumann_gradient_lemma,
    check_proof_identities,
    evaluate_conditions,
    verify_main_inequality,
)


def unit_grid(n=17):
    return Grid.from_box((n, n, n), ((0.0, 1.0),) * 3)


def flat_linear_case(n=17):
    """u = z on a flat unit box with vanishing p and h."""
    grid = unit_grid(n)
    m = metric_flat(grid)
    _, _, z = grid.coords()
    u = ScalarField(grid, z.copy())
    idf = make_initial_data(m, 0.0, 0.0)
    return grid, u, idf, m, boundary_geometry(m)


def conformal_zero_flux_case(n=33):
    """Manufactured u with exactly zero flux through the x faces of a
    conformally flat metric, so the zero-flux lemma applies off the PDE."""
    grid = unit_grid(n)
    phi_fn = oracles.lambdify(oracles.phi_conformal_faces())
    m = metric_conformal(grid, phi_fn(*grid.coords()))
    x, y, z = grid.coords()
    u = ScalarField(grid, 0.5 * x * x + 0.3 * y + 0.2 * (z - 0.5) ** 2)
    idf = make_initial_data(m, 0.0, 0.0)
    return grid, u, idf, m, boundary_geometry(m)


# ----------------------------------------------------------------------------
# Report semantics
# ----------------------------------------------------------------------------


def test_identity_report_pass_is_monotone_in_tolerance():
    residual = 1e-3
    passes = [VerificationReport.identity("r", residual, tol).passed
              for tol in (1e-5, 1e-4, 1e-3, 1e-2)]
    assert passes == [False, False, True, True]


def test_inequality_report_margin_and_error_bar():
    rep = VerificationReport.inequality("r", lhs=1.0, rhs=1.2, tolerance=0.05)
    assert rep.margin == pytest.approx(-0.2)
    assert not rep.passed
    rep2 = VerificationReport.inequality("r", 1.0, 1.2, 0.05, error_bar=0.2)
    assert rep2.passed


def test_vacuous_identity_passes_and_says_so():
    rep = VerificationReport.identity("r", 99.0, 1e-6, vacuous=True)
    assert rep.passed and rep.vacuous
    d = rep.to_dict()
    assert d["vacuous"] and d["passed"]
    assert d["breakdown"] == {}


# ----------------------------------------------------------------------------
# One-sided face derivative helper
# ----------------------------------------------------------------------------


def test_face_outward_deriv_skip_exact_on_quadratics():
    grid = unit_grid(9)
    x, y, z = grid.coords()
    f = 1.0 + 2.0 * x - 0.5 * x * x + y * z
    d = _face_outward_deriv_skip(f, grid, "xhi")
    expected = 2.0 - 0.5 * 2.0 * 1.0          # d/dx at x = 1, outward = +x
    np.testing.assert_allclose(d, expected, atol=1e-10)
    d_lo = _face_outward_deriv_skip(f, grid, "xlo")
    np.testing.assert_allclose(d_lo, -2.0, atol=1e-10)   # outward = -x


# ----------------------------------------------------------------------------
# Linear field on a flat box: everything vanishes
# ----------------------------------------------------------------------------


def test_flat_linear_boundary_and_bulk_integrals_vanish():
    grid, u, idf, m, bg = flat_linear_case()
    lhs, lhs_detail = boundary_integral_lhs(u, idf, m, bg)
    assert abs(lhs) < 1e-10
    assert set(lhs_detail["per_face"]) == set(bg)
    split = regular_split(u, m, n_levels=8)
    rhs, rhs_detail = bulk_integral_rhs(u, idf, m, split)
    assert abs(rhs) < 1e-8
    assert "coarea_discrepancy" in rhs_detail


def test_flat_linear_main_inequality_passes_with_zero_margin():
    grid, u, idf, m, bg = flat_linear_case()
    split = regular_split(u, m, n_levels=8)
    rep = verify_main_inequality(u, idf, m, split, bg=bg)
    assert rep.passed
    assert abs(rep.margin) < 1e-8
    assert rep.error_bar < 1e-8
    assert rep.breakdown["A_measure"] == 0.0


def test_flat_linear_identities_all_pass():
    grid, u, idf, m, bg = flat_linear_case()
    reports = check_proof_identities(u, idf, m, bg=bg)
    names = {r.name for r in reports}
    assert {"identity.bochner", "identity.gradient_pairing",
            "identity.face_laplacian", "identity.A_norm",
            "identity.mean_curvature", "identity.kato",
            "identity.gauss_bonnet"} <= names
    for rep in reports:
        assert rep.passed, rep.name
        if not rep.vacuous and rep.kind == "identity":
            assert rep.residual < 1e-8, rep.name


def test_flat_linear_dirichlet_lemma_is_exact():
    grid, u, idf, m, bg = flat_linear_case()
    rep = check_dirichlet_lemma(u, idf, m, bg, "zhi")
    assert rep.passed
    assert rep.residual < 1e-10
    assert rep.breakdown["sign"] == "outward"
    rep_lo = check_dirichlet_lemma(u, idf, m, bg, "zlo")
    assert rep_lo.residual < 1e-10
    assert rep_lo.breakdown["sign"] == "inward"


def test_dirichlet_lemma_requires_constant_face():
    grid, u, idf, m, bg = flat_linear_case(n=9)
    with pytest.raises(PreconditionError):
        check_dirichlet_lemma(u, idf, m, bg, "xlo")   # u = z varies there


# ----------------------------------------------------------------------------
# Pure-trace data: both sides of the constant-face lemma equal c
# ----------------------------------------------------------------------------


def test_pure_trace_face_lemma_hand_value():
    # p = c g, h = 3c makes u = z a solution; on the top face
    # lhs = p(grad u, eta) = c and rhs = -(tr_S p - h) |grad u| = c
    c = oracles.PURE_TRACE_FACE_VALUE
    grid = unit_grid()
    m = metric_flat(grid)
    _, _, z = grid.coords()
    u = ScalarField(grid, z.copy())
    idf = make_initial_data(m, c, 3.0 * c)
    bg = boundary_geometry(m)
    rep = check_dirichlet_lemma(u, idf, m, bg, "zhi")
    assert rep.residual < 1e-10
    assert rep.breakdown["mean_lhs"] == pytest.approx(c, abs=1e-10)
    assert rep.breakdown["mean_rhs"] == pytest.approx(c, abs=1e-10)
    rep_lo = check_dirichlet_lemma(u, idf, m, bg, "zlo")
    assert rep_lo.residual < 1e-10
    assert rep_lo.breakdown["mean_lhs"] == pytest.approx(-c, abs=1e-10)


def test_boundary_lhs_flips_sign_with_p():
    grid = unit_grid(9)
    m = metric_flat(grid)
    x, y, z = grid.coords()
    u = ScalarField(grid, z + 0.3 * y)   # constant gradient: d|grad u| = 0
    # spatially varying p so the closed-surface integral does not cancel
    p6 = np.stack([0.1 * x, 0.05 * (y + 0.1), 0.02 * z,
                   0.08 * x * y, 0.03 * np.ones_like(x),
                   0.06 * (z + 0.2)], axis=-1)
    bg = boundary_geometry(m)
    lhs_pos, det_pos = boundary_integral_lhs(
        u, make_initial_data(m, p6, 0.0), m, bg)
    lhs_neg, det_neg = boundary_integral_lhs(
        u, make_initial_data(m, -p6, 0.0), m, bg)
    assert abs(lhs_pos) > 1e-3
    assert lhs_neg == pytest.approx(-lhs_pos, abs=1e-12)
    for face in bg:
        assert det_neg["per_face"][face] == pytest.approx(
            -det_pos["per_face"][face], abs=1e-12)


# ----------------------------------------------------------------------------
# Zero-flux lemmas on a conformal metric
# ----------------------------------------------------------------------------


def test_neumann_gradient_lemma_sign_is_minus():
    grid, u, idf, m, bg = conformal_zero_flux_case()
    rep = check_neumann_gradient_lemma(u, m, bg, "xlo", idf=idf)
    assert rep.breakdown["matching_sign"] == "minus"
    assert rep.breakdown["max_flux"] < 1e-10
    assert rep.residual < 1e-2
    # the two signs must be clearly discriminated
    assert rep.breakdown["residual_plus"] > 10.0 * rep.residual
    assert rep.breakdown["b_term_scale"] > 5.0 * rep.residual


def test_neumann_gradient_lemma_excludes_face_critical_points():
    # a gradient zero on the face must not blow up the residual: the node is
    # excluded as a lemma precondition
    grid = unit_grid(33)
    phi_fn = oracles.lambdify(oracles.phi_conformal_faces())
    m = metric_conformal(grid, phi_fn(*grid.coords()))
    x, y, z = grid.coords()
    u = ScalarField(grid, 0.5 * x * x
                    + 0.3 * (y - 0.5) ** 2 + 0.2 * (z - 0.5) ** 2)
    bg = boundary_geometry(m)
    rep = check_neumann_gradient_lemma(u, m, bg, "xlo",
                                       idf=make_initial_data(m, 0.0, 0.0))
    assert np.isfinite(rep.breakdown["residual_plus"])
    assert np.isfinite(rep.breakdown["residual_minus"])
    assert rep.breakdown["residual_minus"] < 1.0


def test_neumann_gradient_lemma_rejects_fluxed_face():
    grid, u, idf, m, bg = conformal_zero_flux_case(n=17)
    with pytest.raises(PreconditionError):
        check_neumann_gradient_lemma(u, m, bg, "ylo", idf=idf)


def test_neumann_boundary_term_subcheck():
    grid, u, idf, m, bg = conformal_zero_flux_case()
    split = regular_split(u, m, n_levels=12)
    rep = check_neumann_boundary_term(u, idf, m, bg, "xlo", split)
    assert not rep.vacuous
    assert rep.breakdown["n_points"] > 0
    assert rep.passed
    assert rep.breakdown["trace_subcheck_residual"] < 1e-2


# ----------------------------------------------------------------------------
# Closing conditions
# ----------------------------------------------------------------------------


def test_condition_energy_worst_case_hand_value():
    # p = c g, h = 3c on a flat box: mu = 3c^2, J = 0, and the worst-case
    # margin is 12c^2 - 18c^2 = -6c^2
    c = 0.1
    grid = unit_grid()
    m = metric_flat(grid)
    idf = make_initial_data(m, c, 3.0 * c)
    reports = {r.name: r for r in evaluate_conditions(idf, m)}
    rep = reports["condition.energy_worst_case"]
    assert rep.lhs == pytest.approx(-6.0 * c * c, abs=1e-10)
    assert not rep.passed


def test_condition_boundary_convexity_hand_value():
    # flat faces (H_S = 0), p = 0, h = 1/2: margin is -|0 - h| = -1/2
    grid = unit_grid(9)
    m = metric_flat(grid)
    idf = make_initial_data(m, 0.0, 0.5)
    reports = {r.name: r for r in evaluate_conditions(idf, m)}
    assert reports["condition.boundary_convexity"].lhs == pytest.approx(-0.5, abs=1e-12)
    assert reports["condition.boundary_p_eta"].lhs == pytest.approx(0.0, abs=1e-12)
    assert reports["condition.scalar_weak"].lhs == pytest.approx(0.25, abs=1e-10)


def test_condition_solution_direction_uses_u():
    grid = unit_grid(9)
    m = metric_flat(grid)
    idf = make_initial_data(m, 0.0, 0.5)
    _, _, z = grid.coords()
    u = ScalarField(grid, z.copy())
    names = [r.name for r in evaluate_conditions(idf, m, u=u)]
    assert "condition.energy_solution_nu" in names
    rep = {r.name: r for r in evaluate_conditions(idf, m, u=u)}[
        "condition.energy_solution_nu"]
    assert rep.lhs == pytest.approx(0.25, abs=1e-10)
    # without u the solution-direction condition is not reported
    assert "condition.energy_solution_nu" not in {
        r.name for r in evaluate_conditions(idf, m)}


def test_conditions_are_report_only():
    grid = unit_grid(9)
    m = metric_flat(grid)
    idf = make_initial_data(m, 0.0, 0.5)
    for rep in evaluate_conditions(idf, m):
        assert rep.kind == "inequality"
        assert rep.rhs == 0.0

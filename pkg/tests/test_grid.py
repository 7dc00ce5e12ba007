"""Grid geometry, quadrature weights, and symmetric-storage algebra."""

from __future__ import annotations

import numpy as np
import pytest

from stharm.grid import (FACE_AXIS_SIDE, FACES, FieldShapeError, Grid,
                         GridError, ScalarField, SymTensorField, VectorField,
                         cross_metric, full_to_sym, sym_det, sym_dot_sym,
                         sym_identity, sym_inverse, sym_matvec, sym_norm2_with,
                         sym_quadform, sym_to_full, sym_trace_with,
                         tangent_axes, vec_dot, vec_norm)

RNG = np.random.default_rng(20240817)


def random_spd6(n: int, rng=RNG) -> np.ndarray:
    """(n, 6) batch of symmetric positive-definite matrices."""
    m = rng.normal(size=(n, 3, 3))
    spd = np.einsum("nij,nkj->nik", m, m) + 3.0 * np.eye(3)
    return full_to_sym(spd)


@pytest.fixture
def unit_grid() -> Grid:
    return Grid.from_box((9, 11, 13), [[0, 1], [0, 1], [0, 1]])


# ---------------------------------------------------------------------------
# Grid geometry
# ---------------------------------------------------------------------------


def test_from_box_spacing_and_coords():
    g = Grid.from_box((5, 9, 17), [[0, 1], [-1, 1], [2, 6]])
    assert g.spacing == (0.25, 0.25, 0.25)
    assert g.origin == (0.0, -1.0, 2.0)
    x = g.axis_coords(0)
    np.testing.assert_allclose(x, [0, 0.25, 0.5, 0.75, 1.0])
    X, Y, Z = g.coords()
    assert X.shape == g.dims
    assert Y[0, -1, 0] == pytest.approx(1.0)
    assert Z[0, 0, -1] == pytest.approx(6.0)


@pytest.mark.parametrize("bad", [
    {"dims": (4, 9, 9)},                       # below the stencil minimum
    {"dims": (9, 9)},                          # wrong rank
    {"spacing": (0.1, -0.1, 0.1)},             # nonpositive spacing
])
def test_grid_validation(bad):
    kwargs = {"dims": (9, 9, 9), "spacing": (0.1, 0.1, 0.1)}
    kwargs.update(bad)
    with pytest.raises(GridError):
        Grid(**kwargs)


def test_from_box_rejects_degenerate_extent():
    with pytest.raises(GridError):
        Grid.from_box((9, 9, 9), [[0, 1], [1, 1], [0, 1]])


def test_unknown_boundary_tag_rejected():
    with pytest.raises(GridError):
        Grid.from_box((9, 9, 9), [[0, 1]] * 3, boundary_tags={"top": "wall"})


def test_node_weights_integrate_volume(unit_grid):
    w = unit_grid.node_weights()
    total = w.sum() * unit_grid.cell_volume
    assert total == pytest.approx(1.0, abs=1e-13)


def test_node_weights_trapezoid_on_smooth_field():
    # trapezoidal quadrature of a product cosine; exact value is the product
    # of 1D integrals, error O(dx^2)
    g = Grid.from_box((41, 41, 41), [[0, 1]] * 3)
    X, Y, Z = g.coords()
    f = np.cos(X) * np.cos(2 * Y) * np.cos(3 * Z)
    exact = np.sin(1.0) * (np.sin(2.0) / 2) * (np.sin(3.0) / 3)
    approx = np.sum(f * g.node_weights()) * g.cell_volume
    assert approx == pytest.approx(exact, abs=5e-4)


def test_face_slices_consistent_with_axis_side(unit_grid):
    for face in FACES:
        axis, side = FACE_AXIS_SIDE[face]
        sl = unit_grid.face_node_slices(face)
        probe = np.zeros(unit_grid.dims)
        probe[sl] = 1.0
        expected_index = 0 if side == 0 else unit_grid.dims[axis] - 1
        flat = np.moveaxis(probe, axis, 0)
        assert flat[expected_index].all()
        assert flat[1 - expected_index if expected_index == 0 else 0].sum() == 0
        assert unit_grid.face_shape(face) == tuple(
            unit_grid.dims[a] for a in tangent_axes(axis))


def test_interior_slices_margin(unit_grid):
    inner = unit_grid.interior_slices(margin=2)
    probe = np.zeros(unit_grid.dims)
    probe[inner] = 1.0
    assert probe.sum() == np.prod([n - 4 for n in unit_grid.dims])
    for face in FACES:
        assert probe[unit_grid.face_node_slices(face)].sum() == 0


def test_index_to_physical_roundtrip(unit_grid):
    pts = RNG.uniform(0, 8, size=(20, 3))
    phys = unit_grid.index_to_physical(pts)
    back = (phys - np.asarray(unit_grid.origin)) / np.asarray(unit_grid.spacing)
    np.testing.assert_allclose(back, pts, atol=1e-12)


# ---------------------------------------------------------------------------
# Symmetric-storage algebra against dense linear algebra
# ---------------------------------------------------------------------------


def test_sym_roundtrip():
    a6 = random_spd6(50)
    np.testing.assert_allclose(full_to_sym(sym_to_full(a6)), a6, atol=1e-14)


def test_sym_det_and_inverse_match_dense():
    a6 = random_spd6(50)
    dense = sym_to_full(a6)
    np.testing.assert_allclose(sym_det(a6), np.linalg.det(dense), rtol=1e-10)
    inv = sym_to_full(sym_inverse(a6))
    np.testing.assert_allclose(inv, np.linalg.inv(dense), rtol=1e-9, atol=1e-11)


def test_sym_matvec_quadform_match_dense():
    a6 = random_spd6(50)
    dense = sym_to_full(a6)
    v = RNG.normal(size=(50, 3))
    w = RNG.normal(size=(50, 3))
    np.testing.assert_allclose(sym_matvec(a6, v),
                               np.einsum("nij,nj->ni", dense, v), atol=1e-12)
    np.testing.assert_allclose(sym_quadform(a6, v, w),
                               np.einsum("nij,ni,nj->n", dense, v, w),
                               atol=1e-11)
    np.testing.assert_allclose(sym_quadform(a6, v), sym_quadform(a6, v, v),
                               atol=0)


def test_sym_contractions_match_dense():
    a6 = random_spd6(30)
    b6 = random_spd6(30)
    inv6 = sym_inverse(random_spd6(30))
    ginv = sym_to_full(inv6)
    a = sym_to_full(a6)
    b = sym_to_full(b6)
    np.testing.assert_allclose(sym_trace_with(inv6, a6),
                               np.einsum("nij,nij->n", ginv, a), rtol=1e-10)
    np.testing.assert_allclose(
        sym_norm2_with(inv6, a6),
        np.einsum("nik,njl,nij,nkl->n", ginv, ginv, a, a), rtol=1e-9)
    np.testing.assert_allclose(
        sym_dot_sym(a6, b6, inv6),
        np.einsum("nik,njl,nij,nkl->n", ginv, ginv, a, b), rtol=1e-9)


def test_sym_identity_neutral():
    eye6 = sym_identity((4,))
    v = RNG.normal(size=(4, 3))
    np.testing.assert_allclose(sym_matvec(eye6, v), v, atol=0)
    assert sym_trace_with(eye6, eye6) == pytest.approx(3.0)


def test_vec_norm_flat_matches_euclidean():
    eye6 = sym_identity((10,))
    v = RNG.normal(size=(10, 3))
    np.testing.assert_allclose(vec_norm(eye6, v), np.linalg.norm(v, axis=-1),
                               rtol=1e-12)
    w = RNG.normal(size=(10, 3))
    np.testing.assert_allclose(vec_dot(eye6, v, w), np.sum(v * w, axis=-1),
                               atol=1e-12)


def test_cross_metric_orthogonality_and_flat_limit():
    g6 = random_spd6(40)
    sqrt_det = np.sqrt(sym_det(g6))
    a = RNG.normal(size=(40, 3))
    b = RNG.normal(size=(40, 3))
    c = cross_metric(g6, sqrt_det, a, b)
    # g-orthogonal to both inputs
    np.testing.assert_allclose(vec_dot(g6, c, a), 0.0, atol=1e-9)
    np.testing.assert_allclose(vec_dot(g6, c, b), 0.0, atol=1e-9)
    # flat metric: reduces to the Euclidean cross product
    eye6 = sym_identity((40,))
    flat = cross_metric(eye6, np.ones(40), a, b)
    np.testing.assert_allclose(flat, np.cross(a, b), atol=1e-12)


def test_cross_metric_completes_orthonormal_frame():
    g6 = random_spd6(25)
    sqrt_det = np.sqrt(sym_det(g6))
    # build a g-orthonormal pair by Gram-Schmidt
    a = RNG.normal(size=(25, 3))
    a /= vec_norm(g6, a)[:, None]
    b = RNG.normal(size=(25, 3))
    b -= vec_dot(g6, a, b)[:, None] * a
    b /= vec_norm(g6, b)[:, None]
    c = cross_metric(g6, sqrt_det, a, b)
    np.testing.assert_allclose(vec_norm(g6, c), 1.0, rtol=1e-9)


# ---------------------------------------------------------------------------
# Field containers
# ---------------------------------------------------------------------------


def test_field_shape_validation(unit_grid):
    good = np.zeros(unit_grid.dims)
    ScalarField(unit_grid, good)
    with pytest.raises(FieldShapeError):
        ScalarField(unit_grid, np.zeros((3, 3, 3)))
    with pytest.raises(FieldShapeError):
        VectorField(unit_grid, np.zeros(unit_grid.dims + (2,)))
    with pytest.raises(FieldShapeError):
        SymTensorField(unit_grid, np.zeros(unit_grid.dims + (9,)))
    VectorField(unit_grid, np.zeros(unit_grid.dims + (3,)))
    SymTensorField(unit_grid, np.zeros(unit_grid.dims + (6,)))

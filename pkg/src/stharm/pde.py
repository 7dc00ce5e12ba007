"""Solver for the quasilinear level-set equation

    Lap_g u = (h - tr_g p) |grad u|_g

on a box, with per-face Dirichlet or zero-flux Neumann conditions.

The Laplace-Beltrami operator is discretized in divergence (flux) form,

    Lap_g u = (1/sqrt g) d_i (sqrt g g^{ij} d_j u),

with half-point averaged coefficients, so the assembled interior block is
symmetric in the sqrt(g)-weighted inner product.  The degenerate gradient
norm is regularized by a decreasing delta-continuation, each stage solved
by damped Picard iteration with warm-started conjugate-gradient linear
solves (diagonal preconditioner, fixed iteration order: runs are
deterministic and translation-equivariant bit for bit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .expressions import AnalyticExpr
from .fields import InitialDataFields
from .grid import FACE_AXIS_SIDE, FACES, Grid, ScalarField, tangent_axes
from .metric import MetricData

# ============================================================================
# Errors and configuration
# ============================================================================


class SolverError(RuntimeError):
    """Base class for solver failures."""


class SingularOperatorError(SolverError):
    """Pure-Neumann problem posed without a pinned gauge node."""


class LinearSolveError(SolverError):
    """Conjugate gradient hit its iteration cap.

    Carries the best iterate seen and its relative residual.
    """

    def __init__(self, message: str, best_x: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual
        self.iterations = iterations


class PicardStallError(SolverError):
    """Picard iteration hit its per-stage cap without meeting the update tolerance."""

    def __init__(self, message: str, last_u: np.ndarray, delta: float, update: float):
        super().__init__(message)
        self.last_u = last_u
        self.delta = delta
        self.update = update


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-face condition: Dirichlet with a value profile, or zero-flux Neumann."""

    kind: str
    value: object = None  # AnalyticExpr | callable(x,y,z) | ndarray | float

    @classmethod
    def dirichlet(cls, value) -> "BoundaryCondition":
        return cls("dirichlet", value)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls("neumann")

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary condition kind must be 'dirichlet' or 'neumann', "
                             f"got {self.kind!r}")
        if self.kind == "dirichlet" and self.value is None:
            raise ValueError("dirichlet condition needs a value")
        if self.kind == "neumann" and self.value is not None:
            raise ValueError("neumann condition is zero-flux and takes no value")


@dataclass(frozen=True)
class BoundarySpec:
    """Conditions for all six faces plus the optional pure-Neumann gauge pin."""

    faces: dict
    pin_node: tuple | None = None

    def __post_init__(self):
        missing = [f for f in FACES if f not in self.faces]
        if missing:
            raise ValueError(f"boundary conditions missing for face(s) {missing}")
        unknown = [f for f in self.faces if f not in FACES]
        if unknown:
            raise ValueError(f"unknown face name(s) {unknown}; faces are {FACES}")

    @property
    def dirichlet_faces(self) -> list:
        return [f for f in FACES if self.faces[f].kind == "dirichlet"]

    @property
    def neumann_faces(self) -> list:
        return [f for f in FACES if self.faces[f].kind == "neumann"]


@dataclass(frozen=True)
class SolverConfig:
    """Continuation, Picard, and linear-solve parameters."""

    delta_schedule: tuple = (1e-2, 1e-3, 1e-4, 1e-6)
    picard_tol: float = 1e-8
    max_picard_per_stage: int = 200
    damping: float = 0.8
    linear_tol: float = 1e-11
    linear_maxiter: int = 50000
    keep_stage_solutions: bool = False

    def __post_init__(self):
        sched = tuple(float(d) for d in self.delta_schedule)
        object.__setattr__(self, "delta_schedule", sched)
        if not sched:
            raise ValueError("delta_schedule must be nonempty")
        if any(d <= 0 for d in sched):
            raise ValueError(f"delta_schedule entries must be positive, got {sched}")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError(f"delta_schedule must be strictly decreasing, got {sched}")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        for name in ("picard_tol", "linear_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_picard_per_stage < 1 or self.linear_maxiter < 1:
            raise ValueError("iteration caps must be at least 1")

    @property
    def residual_bound(self) -> float:
        """Reported consistency bound for the final unregularized residual."""
        return 10.0 * self.picard_tol


# ============================================================================
# Operator assembly
# ============================================================================


def _evaluate_face_values(grid: Grid, face: str, value) -> np.ndarray:
    """Dirichlet data on the nodes of one face."""
    sl = grid.face_node_slices(face)
    if isinstance(value, AnalyticExpr):
        x, y, z = grid.coords()
        return np.asarray(value(x[sl], y[sl], z[sl]), dtype=np.float64)
    if callable(value):
        x, y, z = grid.coords()
        return np.broadcast_to(np.asarray(value(x[sl], y[sl], z[sl]), dtype=np.float64),
                               grid.face_shape(face)).copy()
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(grid.face_shape(face), float(arr))
    if arr.shape != grid.face_shape(face):
        raise ValueError(f"dirichlet data for face {face} must have shape "
                         f"{grid.face_shape(face)}, got {arr.shape}")
    return arr.copy()


class LaplaceOperator:
    """Assembled divergence-form Laplace-Beltrami operator.

    Attributes:
        matrix: SPD system matrix over unknown nodes (the negated,
            sqrt(g)-weighted flux form).
        known_matrix: coupling of unknown rows to known (Dirichlet/pinned)
            node columns, same sign convention.
        unknown_mask: bool (nx, ny, nz), True where u is an unknown.
        row_scale: control-volume measures sqrt(g) * prod(w_a dx_a) for
            unknown rows; converts pointwise rhs values to weighted rows.
    """

    def __init__(self, m: MetricData, bc: BoundarySpec):
        self.m = m
        self.bc = bc
        self.grid = m.grid
        self._build()

    # -- assembly ------------------------------------------------------------

    def _build(self):
        grid, m, bc = self.grid, self.m, self.bc
        nx, ny, nz = grid.dims
        n_nodes = grid.n_nodes
        ginv = m.g_inv.values
        sdet = m.sqrt_det.values

        cross_comps = {(0, 1): 1, (0, 2): 2, (1, 2): 4}
        has_cross = any(np.any(ginv[..., c] != 0.0) for c in cross_comps.values())
        if has_cross and bc.neumann_faces:
            raise SolverError(
                "metrics with off-diagonal components are only supported with "
                "all-Dirichlet boundary conditions")

        known_mask = np.zeros(grid.dims, dtype=bool)
        for face in bc.dirichlet_faces:
            known_mask[grid.face_node_slices(face)] = True
        pin = None
        if not bc.dirichlet_faces:
            if bc.pin_node is None:
                raise SingularOperatorError(
                    "all faces are Neumann: the operator is singular; supply "
                    "BoundarySpec.pin_node to fix the additive gauge")
            pin = tuple(int(i) for i in bc.pin_node)
            if any(not (0 <= pin[a] < grid.dims[a]) for a in range(3)):
                raise ValueError(f"pin_node {pin} outside grid dims {grid.dims}")
            known_mask[pin] = True
        self.pin = pin

        unknown_mask = ~known_mask
        self.unknown_mask = unknown_mask
        flat_unknown = unknown_mask.ravel()
        self.n_unknown = int(flat_unknown.sum())
        compact = -np.ones(n_nodes, dtype=np.int64)
        compact[np.flatnonzero(flat_unknown)] = np.arange(self.n_unknown)
        self._compact = compact

        # per-axis half-cell factors at Neumann boundary nodes
        w_axis = np.ones(grid.dims + (3,))
        for face in bc.neumann_faces:
            axis, _ = FACE_AXIS_SIDE[face]
            sl = grid.face_node_slices(face) + (axis,)
            w_axis[sl] = 0.5
        self._w_axis = w_axis
        dxs = grid.spacing
        self.row_scale_full = sdet * np.prod(w_axis, axis=-1) * grid.cell_volume

        rows, cols, vals = [], [], []

        def add(r_flat, c_flat, v):
            rows.append(r_flat)
            cols.append(c_flat)
            vals.append(v)

        lin = np.arange(n_nodes).reshape(grid.dims)

        # diagonal terms: face fluxes with half-point coefficients
        diag_slot = {0: 0, 1: 3, 2: 5}
        self._half_coeff = {}
        for a in range(3):
            B = sdet * ginv[..., diag_slot[a]]
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(0, grid.dims[a] - 1)
            hi[a] = slice(1, grid.dims[a])
            Bh = 0.5 * (B[tuple(lo)] + B[tuple(hi)])
            self._half_coeff[a] = Bh
            t1, t2 = tangent_axes(a)
            trans = (w_axis[tuple(lo) + (t1,)] * dxs[t1]) * (w_axis[tuple(lo) + (t2,)] * dxs[t2])
            c = Bh * trans / dxs[a]
            i_lo = lin[tuple(lo)].ravel()
            i_hi = lin[tuple(hi)].ravel()
            cf = c.ravel()
            # natural-sign weighted rows: row(lo) += c (u_hi - u_lo),
            # row(hi) -= c (u_hi - u_lo)
            add(i_lo, i_hi, cf)
            add(i_lo, i_lo, -cf)
            add(i_hi, i_lo, cf)
            add(i_hi, i_hi, -cf)

        # cross terms: centered differences (all-Dirichlet only; interior rows)
        if has_cross:
            vol = grid.cell_volume
            inner = [slice(1, d - 1) for d in grid.dims]
            for (a, b), slot in cross_comps.items():
                B = sdet * ginv[..., slot]
                if not np.any(B != 0.0):
                    continue
                base = np.array(np.meshgrid(*[np.arange(1, d - 1) for d in grid.dims],
                                            indexing="ij")).reshape(3, -1)
                r = lin[tuple(inner)].ravel()
                for (da, db) in ((a, b), (b, a)):
                    # vol * d_da (B d_db u) at interior nodes, both centered
                    coeff = vol / (4.0 * dxs[da] * dxs[db])
                    for sa in (+1, -1):
                        pa = base.copy()
                        pa[da] += sa
                        Bv = B[pa[0], pa[1], pa[2]]
                        for sb in (+1, -1):
                            pb = pa.copy()
                            pb[db] += sb
                            c_flat = lin[pb[0], pb[1], pb[2]]
                            add(r, c_flat, (sa * sb) * coeff * Bv)

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)

        keep = flat_unknown[rows]
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        r_idx = compact[rows]
        to_unknown = flat_unknown[cols]

        # negate: the flux form is negative definite, CG wants SPD
        A = sp.coo_matrix(
            (-vals[to_unknown], (r_idx[to_unknown], compact[cols[to_unknown]])),
            shape=(self.n_unknown, self.n_unknown)).tocsr()
        A.sum_duplicates()
        K = sp.coo_matrix(
            (-vals[~to_unknown], (r_idx[~to_unknown], cols[~to_unknown])),
            shape=(self.n_unknown, n_nodes)).tocsr()
        K.sum_duplicates()
        self.matrix = A
        self.known_matrix = K
        self._diag = A.diagonal()
        if np.any(self._diag <= 0):
            raise SolverError("assembled operator has a nonpositive diagonal entry")

    # -- known values --------------------------------------------------------

    def dirichlet_values(self) -> np.ndarray:
        """Full-grid array holding Dirichlet/pin data (faces applied in FACES
        order, later faces winning on shared edges); zero elsewhere."""
        out = np.zeros(self.grid.dims)
        for face in self.bc.dirichlet_faces:
            out[self.grid.face_node_slices(face)] = \
                _evaluate_face_values(self.grid, face, self.bc.faces[face].value)
        if self.pin is not None:
            out[self.pin] = 0.0
        return out

    # -- linear algebra ------------------------------------------------------

    def weighted_rhs(self, f_values: np.ndarray, known_full: np.ndarray) -> np.ndarray:
        """Right-hand side of the SPD system for pointwise rhs f and known data."""
        fw = (self.row_scale_full * f_values).ravel()[self.unknown_mask.ravel()]
        b = -fw
        known_flat = np.where(self.unknown_mask, 0.0, known_full).ravel()
        b -= self.known_matrix @ known_flat
        return b

    def insert_known(self, x: np.ndarray, known_full: np.ndarray) -> np.ndarray:
        u = known_full.copy()
        u[self.unknown_mask] = x
        return u

    def extract_unknown(self, u_full: np.ndarray) -> np.ndarray:
        return u_full[self.unknown_mask]

    def apply_pointwise(self, u_values: np.ndarray) -> np.ndarray:
        """Divergence-form Lap_g u at strict-interior nodes with the same
        half-point coefficients as the assembled matrix; zero on the
        boundary ring."""
        grid = self.grid
        dxs = grid.spacing
        sdet = self.m.sqrt_det.values
        ginv = self.m.g_inv.values
        out = np.zeros(grid.dims)
        inner = tuple(slice(1, d - 1) for d in grid.dims)
        acc = np.zeros(tuple(d - 2 for d in grid.dims))
        for a in range(3):
            Bh = self._half_coeff[a]
            # flux difference: Bh_(i+1/2)(u_{i+1}-u_i) - Bh_(i-1/2)(u_i-u_{i-1})
            sl_mid = [slice(1, d - 1) for d in grid.dims]
            sl_up = list(sl_mid)
            sl_dn = list(sl_mid)
            sl_up[a] = slice(2, grid.dims[a])
            sl_dn[a] = slice(0, grid.dims[a] - 2)
            sl_hi = list(sl_mid)
            sl_hi[a] = slice(1, grid.dims[a] - 1)
            sl_lo = list(sl_mid)
            sl_lo[a] = slice(0, grid.dims[a] - 2)
            du_up = u_values[tuple(sl_up)] - u_values[tuple(sl_mid)]
            du_dn = u_values[tuple(sl_mid)] - u_values[tuple(sl_dn)]
            acc += (Bh[tuple(sl_hi)] * du_up - Bh[tuple(sl_lo)] * du_dn) / (dxs[a] * dxs[a])
        cross_comps = {(0, 1): 1, (0, 2): 2, (1, 2): 4}
        for (a, b), slot in cross_comps.items():
            B = sdet * ginv[..., slot]
            if not np.any(B != 0.0):
                continue
            for (da, db) in ((a, b), (b, a)):
                # at interior nodes this reproduces the assembled cross stencil
                flux = B * _centered(u_values, db, dxs[db])
                acc += _centered(flux, da, dxs[da])[inner]
        out[inner] = acc / sdet[inner]
        return out

    def solve_linear(self, f_values, known_full, tol: float, maxiter: int,
                     x0_full: np.ndarray | None = None) -> tuple[np.ndarray, int]:
        """Solve for the full-grid field; returns (u_full, cg_iterations)."""
        if np.isscalar(f_values):
            f_values = np.full(self.grid.dims, float(f_values))
        b = self.weighted_rhs(f_values, known_full)
        x0 = self.extract_unknown(x0_full) if x0_full is not None \
            else np.zeros(self.n_unknown)
        x, iters = conjugate_gradient(self.matrix, b, x0, tol, maxiter, self._diag)
        return self.insert_known(x, known_full), iters


def _centered(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Centered first difference on the full grid (one-sided at the ends);
    matches the cross-term stencil of the assembled matrix on interior nodes."""
    from . import fd
    return fd.deriv1(values, axis, spacing)


def assemble_laplacian(m: MetricData, bc: BoundarySpec) -> LaplaceOperator:
    """Build the operator; rejects singular pure-Neumann setups without a pin."""
    return LaplaceOperator(m, bc)


# ============================================================================
# Conjugate gradient (deterministic, Jacobi preconditioner)
# ============================================================================


def conjugate_gradient(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray,
                       tol: float, maxiter: int,
                       diag: np.ndarray) -> tuple[np.ndarray, int]:
    """Preconditioned CG with a fixed iteration order.

    Convergence is relative: ||b - A x|| <= tol * ||b||.  Raises
    LinearSolveError (carrying the best iterate) if the cap is hit.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    x = x0.copy()
    r = b - A @ x
    best_res = float(np.linalg.norm(r))
    best_x = x.copy()
    if best_res <= tol * bnorm:
        return x, 0
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= tol * bnorm:
            return x, k
        z = r / diag
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise LinearSolveError(
        f"conjugate gradient did not reach tol={tol:g} within {maxiter} iterations "
        f"(best relative residual {best_res / bnorm:.3e})",
        best_x=best_x, residual=best_res / bnorm, iterations=maxiter)


def linear_solve(op: LaplaceOperator, f_values, known_full, tol: float = 1e-11,
                 maxiter: int = 50000, x0_full=None) -> tuple[np.ndarray, int]:
    """Module-level convenience wrapper around LaplaceOperator.solve_linear."""
    return op.solve_linear(f_values, known_full, tol, maxiter, x0_full)


# ============================================================================
# Nonlinear driver
# ============================================================================


@dataclass
class StageRecord:
    delta: float
    picard_iterations: int
    final_update: float
    linear_iterations: int


@dataclass
class SolveResult:
    u: ScalarField
    residual_field: ScalarField
    residual_max: float
    iterations: int
    converged: bool
    delta_final: float
    stages: list = field(default_factory=list)
    linear_iterations: int = 0
    compatibility: float | None = None
    stage_solutions: list = field(default_factory=list)


def solve(m: MetricData, idf: InitialDataFields, bc: BoundarySpec,
          config: SolverConfig = SolverConfig()) -> SolveResult:
    """Delta-continuation / damped-Picard solve of Lap u = (h - P) |grad u|.

    The working variable is anchored by subtracting a reference boundary
    value, which removes the additive mode the equation cannot see; shifted
    data therefore reproduces the same iteration exactly.
    """
    from .calculus import gradient  # local import to avoid a cycle

    grid = m.grid
    op = assemble_laplacian(m, bc)
    known = op.dirichlet_values()

    if op.bc.dirichlet_faces:
        ref_face = op.bc.dirichlet_faces[0]
        anchor = float(known[grid.face_node_slices(ref_face)][0, 0])
    else:
        anchor = 0.0
    known_shifted = known - anchor

    rhs_coeff = idf.h.values - idf.trace_p.values
    lin_total = 0

    w, it0 = op.solve_linear(0.0, known_shifted, config.linear_tol,
                             config.linear_maxiter)
    lin_total += it0

    stages = []
    stage_solutions = []
    total_picard = 0
    for delta in config.delta_schedule:
        stage_lin = 0
        update = np.inf
        for _ in range(config.max_picard_per_stage):
            wfield = ScalarField(grid, w)
            _, gnorm = gradient(wfield, m)
            f = rhs_coeff * np.sqrt(gnorm.values ** 2 + delta)
            v, its = op.solve_linear(f, known_shifted, config.linear_tol,
                                     config.linear_maxiter, x0_full=w)
            stage_lin += its
            w_new = (1.0 - config.damping) * w + config.damping * v
            update = float(np.max(np.abs(w_new - w)))
            w = w_new
            total_picard += 1
            if update < config.picard_tol:
                break
        else:
            raise PicardStallError(
                f"Picard iteration stalled at delta={delta:g}: update {update:.3e} "
                f"after {config.max_picard_per_stage} iterations",
                last_u=w + anchor, delta=delta, update=update)
        lin_total += stage_lin
        stages.append(StageRecord(delta=delta,
                                  picard_iterations=total_picard,
                                  final_update=update,
                                  linear_iterations=stage_lin))
        if config.keep_stage_solutions:
            stage_solutions.append(ScalarField(grid, w + anchor))

    u_values = w + anchor
    u = ScalarField(grid, u_values)
    res = residual(u, m, idf, op)
    inner = tuple(slice(1, d - 1) for d in grid.dims)
    res_max = float(np.max(np.abs(res.values[inner])))

    compat = None
    if not op.bc.dirichlet_faces:
        wts = grid.node_weights()
        _, gnorm = gradient(u, m)
        f_final = rhs_coeff * gnorm.values
        compat = float(np.sum(f_final * m.sqrt_det.values * wts) * grid.cell_volume)

    return SolveResult(u=u, residual_field=res, residual_max=res_max,
                       iterations=total_picard, converged=True,
                       delta_final=config.delta_schedule[-1], stages=stages,
                       linear_iterations=lin_total, compatibility=compat,
                       stage_solutions=stage_solutions)


def residual(u: ScalarField, m: MetricData, idf: InitialDataFields,
             op: LaplaceOperator | None = None) -> ScalarField:
    """Pointwise unregularized residual Lap u + (P - h) |grad u| at strict
    interior nodes (zero on the boundary ring), using the solver stencils."""
    from .calculus import gradient  # local import to avoid a cycle

    if op is None:
        all_dirichlet = BoundarySpec(
            faces={f: BoundaryCondition.dirichlet(0.0) for f in FACES})
        op = assemble_laplacian(m, all_dirichlet)
    lap = op.apply_pointwise(u.values)
    _, gnorm = gradient(u, m)
    res = lap + (idf.trace_p.values - idf.h.values) * gnorm.values
    inner = tuple(slice(1, d - 1) for d in m.grid.dims)
    out = np.zeros(m.grid.dims)
    out[inner] = res[inner]
    return ScalarField(m.grid, out)

"""Error measures, broken norms, and the norm-equivalence probe.

The two error columns of the convergence tables are

* ``l2_error``     -- || u_h - Q_0 u ||  with Q_0 the cell-wise L2 projection
                      onto P_k, and
* ``energy_error`` -- ||| u - u_h |||, evaluated per cell as the L2 distance
                      between the projected exact gradient and the weak
                      gradient of u_h (the weak gradient of a smooth field
                      with zero boundary trace *is* its projected gradient,
                      so the difference measures the full energy error).

The broken H1 norm used by the equivalence probe is

    ||v||_{1,h}^2 = sum_T ||grad v||_T^2 + sum_e h_e^{-1} ||[v]||_e^2,

with the jump [v] the difference of the two traces on interior edges and the
trace itself on boundary edges.  Edges are counted once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .mesh import Mesh
from .quadbasis import (
    MonomialBasis,
    dim_poly,
    edge_quadrature,
    gradient_coeffs,
    mass_matrix,
    polygon_rule,
    project_scalar,
    project_vector,
)
from .system import DofMap, Solution, assemble, build_dof_map
from .weakgrad import BcMode, WeakGradOperator, build_all_weak_grads


@dataclass
class ErrorReport:
    level: int
    n_dofs: int
    l2_error: float
    energy_error: float
    h1h_grad: float  # broken-gradient part of ||u_h - Q_0 u||_{1,h}
    h1h_jump: float  # jump part of the same
    l2_rate: float | None = None
    energy_rate: float | None = None


def _as_coeffs(u_h, mesh: Mesh) -> np.ndarray:
    if isinstance(u_h, Solution):
        return u_h.cell_coeffs(mesh.n_cells)
    return np.asarray(u_h, dtype=float)


def l2_error(u_h, u_exact, mesh: Mesh, k: int, order: int | None = None) -> float:
    """|| u_h - Q_0 u || over the mesh; u_exact is called with (n, 2) points."""
    coeffs = _as_coeffs(u_h, mesh)
    total = 0.0
    for cell in mesh.cells:
        proj = project_scalar(u_exact, mesh, cell, k, order=order)
        d = coeffs[cell.id] - proj
        m = mass_matrix(
            MonomialBasis.for_cell(mesh, cell, k), polygon_rule(mesh, cell, 2 * k)
        )
        total += float(d @ m @ d)
    return math.sqrt(total)


def energy_error_per_cell(
    u_h,
    grad_u_exact,
    mesh: Mesh,
    k: int,
    bc: BcMode,
    ops: list[WeakGradOperator] | None = None,
    j: int | None = None,
) -> np.ndarray:
    """Squared per-cell energy error || Q_h grad u - grad_w u_h ||_T^2.

    ``grad_u_exact`` is called with (n, 2) points and returns (n, 2) values.
    """
    coeffs = _as_coeffs(u_h, mesh)
    if ops is None:
        ops = build_all_weak_grads(mesh, k, BcMode(bc), j=j)
    out = np.empty(mesh.n_cells)
    for cell in mesh.cells:
        op = ops[cell.id]
        gw = op.apply(coeffs)
        gu = project_vector(grad_u_exact, mesh, cell, op.j, order=2 * op.j + 6)
        out[cell.id] = op.vector_norm(gu - gw) ** 2
    return out


def energy_error(
    u_h,
    grad_u_exact,
    mesh: Mesh,
    k: int,
    bc: BcMode,
    ops: list[WeakGradOperator] | None = None,
    j: int | None = None,
) -> float:
    """||| u - u_h ||| over the mesh (see module docstring)."""
    return math.sqrt(
        float(np.sum(energy_error_per_cell(u_h, grad_u_exact, mesh, k, bc, ops=ops, j=j)))
    )


def h1h_components(coeffs: np.ndarray, mesh: Mesh, degree: int) -> tuple[float, float]:
    """(broken-gradient part, jump part) of ||v||_{1,h}, each already squared-rooted."""
    coeffs = np.asarray(coeffs, dtype=float)
    grad_sq = 0.0
    if degree > 0:
        for cell in mesh.cells:
            basis = MonomialBasis.for_cell(mesh, cell, degree)
            g = gradient_coeffs(basis, coeffs[cell.id])
            m = mass_matrix(
                MonomialBasis.for_cell(mesh, cell, degree - 1),
                polygon_rule(mesh, cell, 2 * (degree - 1)),
            )
            grad_sq += float(g[0] @ m @ g[0] + g[1] @ m @ g[1])

    jump_sq = 0.0
    n_pts = degree + 1
    for e in mesh.edges:
        pts, w = edge_quadrature(mesh, e, n_pts)
        left = MonomialBasis.for_cell(mesh, e.cell_left, degree).eval(pts) @ coeffs[e.cell_left]
        if e.boundary:
            jump = left
        else:
            right = (
                MonomialBasis.for_cell(mesh, e.cell_right, degree).eval(pts)
                @ coeffs[e.cell_right]
            )
            jump = left - right
        jump_sq += float(w @ (jump * jump)) / e.length
    return math.sqrt(grad_sq), math.sqrt(jump_sq)


def h1h_norm(coeffs: np.ndarray, mesh: Mesh, degree: int) -> float:
    g, j = h1h_components(coeffs, mesh, degree)
    return math.hypot(g, j)


def h1h_gram(mesh: Mesh, k: int, dof_map: DofMap | None = None) -> scipy.sparse.csr_matrix:
    """Sparse Gram matrix H of ||.||_{1,h}^2 on the global DOF space.

    x' H x equals h1h_norm(dof_map.expand(x), mesh, k)^2 for every DOF
    vector x.  Cell terms are the broken-gradient Grams (differentiation
    matrices against the degree-(k-1) mass matrix); edge terms are the
    h_e^{-1}-weighted trace-jump Grams, which couple the two cells of an
    interior edge.  Blocks pass through the same per-cell DOF transforms
    as the stiffness assembly, so strong mode yields the Gram on the
    trace-constrained space.
    """
    if dof_map is None:
        dof_map = build_dof_map(mesh, k, BcMode.WEAK)
    n = dof_map.n_dofs
    dk = dim_poly(k)
    rows_acc: list[np.ndarray] = []
    cols_acc: list[np.ndarray] = []
    vals_acc: list[np.ndarray] = []
    gidx = [
        np.arange(dof_map.offsets[c], dof_map.offsets[c + 1], dtype=np.int64)
        for c in range(mesh.n_cells)
    ]

    def scatter(ca: int, cb: int, block: np.ndarray) -> None:
        ta = dof_map.bases.get(ca)
        tb = dof_map.bases.get(cb)
        if ta is not None:
            block = ta.T @ block
        if tb is not None:
            block = block @ tb
        if block.size == 0:
            return
        rows_acc.append(np.repeat(gidx[ca], len(gidx[cb])))
        cols_acc.append(np.tile(gidx[cb], len(gidx[ca])))
        vals_acc.append(block.ravel())

    if k > 0:
        eye = np.eye(dk)
        for cell in mesh.cells:
            basis = MonomialBasis.for_cell(mesh, cell, k)
            diff = np.stack([gradient_coeffs(basis, eye[i]) for i in range(dk)], axis=2)
            mlow = mass_matrix(
                MonomialBasis.for_cell(mesh, cell, k - 1),
                polygon_rule(mesh, cell, 2 * (k - 1)),
            )
            scatter(
                cell.id,
                cell.id,
                diff[0].T @ mlow @ diff[0] + diff[1].T @ mlow @ diff[1],
            )

    for e in mesh.edges:
        pts, w = edge_quadrature(mesh, e, k + 1)
        wl = w / e.length
        t_left = MonomialBasis.for_cell(mesh, e.cell_left, k).eval(pts)
        scatter(e.cell_left, e.cell_left, t_left.T @ (wl[:, None] * t_left))
        if e.boundary:
            continue
        t_right = MonomialBasis.for_cell(mesh, e.cell_right, k).eval(pts)
        cross = -(t_left.T @ (wl[:, None] * t_right))
        scatter(e.cell_right, e.cell_right, t_right.T @ (wl[:, None] * t_right))
        scatter(e.cell_left, e.cell_right, cross)
        scatter(e.cell_right, e.cell_left, cross.T)

    if not vals_acc:
        return scipy.sparse.csr_matrix((n, n))
    h = scipy.sparse.coo_matrix(
        (np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(n, n),
    ).tocsr()
    h.sum_duplicates()
    return h


@dataclass
class ProbeResult:
    min_ratio: float
    max_ratio: float
    n_samples: int
    seed: int


def energy_norm(coeffs: np.ndarray, mesh: Mesh, ops: list[WeakGradOperator]) -> float:
    """||| v ||| = (sum_T || grad_w v ||_T^2)^(1/2) for a broken field."""
    total = 0.0
    for cell in mesh.cells:
        op = ops[cell.id]
        total += op.vector_norm(op.apply(coeffs)) ** 2
    return math.sqrt(total)


def _zero_source(pts: np.ndarray) -> np.ndarray:
    return np.zeros(len(pts))


def norm_equivalence_probe(
    mesh: Mesh,
    k: int,
    bc: BcMode,
    n_samples: int = 50,
    seed: int = 0,
    ops: list[WeakGradOperator] | None = None,
    dof_map: DofMap | None = None,
    refine_steps: int = 8,
) -> ProbeResult:
    """Extremal ratios ||| v ||| / ||v||_{1,h} over seeded samples of the space.

    Each sample starts as a standard-normal coefficient vector in the global
    DOF basis (so strong mode draws from the trace-constrained space).  The
    samples are then driven toward the minimizing / maximizing field (odd and
    even draws respectively) by inverse-power steps on the pencil formed by
    the energy Gram -- the assembled stiffness matrix -- and the H1h Gram.
    Raw Gaussian ratios concentrate around their mean as the space dimension
    grows, which drifts the sampled extremes across refinement levels and
    buries the trend this probe exists to detect; the refined extremes
    estimate the equivalence constants themselves, so their level trend is
    the constants' trend.
    """
    bc = BcMode(bc)
    if ops is None:
        ops = build_all_weak_grads(mesh, k, bc)
    if dof_map is None:
        dof_map = build_dof_map(mesh, k, bc)
    if dof_map.n_dofs == 0:
        raise ValueError("cannot probe an empty space")
    a = assemble(mesh, k, bc, _zero_source, ops=ops).matrix.tocsc()
    h = h1h_gram(mesh, k, dof_map).tocsc()
    lu_a = scipy.sparse.linalg.splu(a)
    lu_h = scipy.sparse.linalg.splu(h)
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    for s in range(n_samples):
        x = rng.standard_normal(dof_map.n_dofs)
        solve_down, gram = (lu_a, h) if s % 2 else (lu_h, a)
        for _ in range(refine_steps):
            x = solve_down.solve(gram @ x)
            x /= np.linalg.norm(x)
        ratios[s] = math.sqrt(float(x @ (a @ x)) / float(x @ (h @ x)))
    return ProbeResult(float(ratios.min()), float(ratios.max()), n_samples, seed)


def rates(reports: list[ErrorReport]) -> list[ErrorReport]:
    """Decorate consecutive reports with log2 error-reduction rates.

    The rate at level l compares against the previous report; it is left
    undefined (None) when either error is zero, since halving h then says
    nothing.
    """
    def _rate(prev: float, cur: float) -> float | None:
        if prev == 0.0 or cur == 0.0:
            return None
        return math.log2(prev / cur)

    for i in range(1, len(reports)):
        reports[i].l2_rate = _rate(reports[i - 1].l2_error, reports[i].l2_error)
        reports[i].energy_rate = _rate(reports[i - 1].energy_error, reports[i].energy_error)
    return reports

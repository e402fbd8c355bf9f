"""Discrete weak gradient for broken polynomial fields.

On each cell T the weak gradient of a (possibly discontinuous) piecewise
polynomial v is the member of [P_j(T)]^2 defined by testing against every
vector polynomial q:

    (grad_w v, q)_T = -(v, div q)_T + <{v}, q . n>_dT,

with n the outward unit normal of T and {v} the two-sided average on each
edge: the plain mean of the two traces on interior edges, and on boundary
edges either the trace itself (strong boundary mode, where the trial space
already vanishes there) or zero (weak boundary mode).  Swapping which side
of an interior edge is "left" leaves the average unchanged, so assembled
quantities never depend on cell numbering.

The operator on T is a dense matrix mapping the stacked monomial
coefficients of T and its edge neighbours (the only cells whose traces
enter) to coefficients in the vector basis of degree j, with j = k+1 on
triangles and k+2 on other polygons by default.  Each column is obtained by
evaluating the right-hand side above and solving against the vector Gram
matrix, which is block-diagonal, so a single Cholesky factor of the scalar
Gram serves both components.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .mesh import Cell, Mesh
from .quadbasis import (
    MonomialBasis,
    VectorBasis,
    cross_mass_matrix,
    dim_poly,
    edge_quadrature,
    gradient_coeffs,
    mass_matrix,
    polygon_rule,
)


class BcMode(str, Enum):
    """Boundary treatment: trace-constrained space vs zero boundary average."""

    STRONG = "strong"
    WEAK = "weak"


def weak_gradient_degree(k: int, cell: Cell, override: int | None = None) -> int:
    """Vector-polynomial degree for the weak gradient on this cell.

    Defaults to k+1 on triangles and k+2 on other polygons; an explicit
    override wins (it must still give a usable space, j >= 0).
    """
    if override is not None:
        if override < 0:
            raise ValueError(f"weak-gradient degree override must be >= 0, got {override}")
        return override
    return k + 1 if cell.is_triangle else k + 2


@dataclass
class WeakGradOperator:
    """Per-cell weak-gradient matrix together with its local metadata.

    ``matrix`` has shape (2*dim P_j, sum of contributor dims); columns are
    grouped per contributor cell (the cell itself first, then its edge
    neighbours in loop order), each block ordered like the contributor's own
    monomial basis.
    """

    cell_id: int
    j: int
    input_degree: int
    contributors: tuple[int, ...]
    offsets: tuple[int, ...]
    matrix: np.ndarray
    basis: VectorBasis
    scalar_mass: np.ndarray  # Gram of the degree-j scalar basis on the cell

    @property
    def n_columns(self) -> int:
        return self.offsets[-1]

    def gather(self, coeffs: np.ndarray) -> np.ndarray:
        """Stack the contributor rows of a (n_cells, D_in) coefficient array."""
        return np.concatenate([coeffs[c] for c in self.contributors])

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Weak-gradient coefficients (stacked x/y blocks) of a broken field."""
        return self.matrix @ self.gather(coeffs)

    def vector_norm(self, vec_coeffs: np.ndarray) -> float:
        """L2(T) norm of a vector polynomial given in the cell's [P_j]^2 basis."""
        d = self.scalar_mass.shape[0]
        cx, cy = vec_coeffs[:d], vec_coeffs[d:]
        return float(np.sqrt(cx @ self.scalar_mass @ cx + cy @ self.scalar_mass @ cy))


def build_weak_grad(
    cell: Cell | int,
    mesh: Mesh,
    k: int,
    bc: BcMode,
    j: int | None = None,
    input_degree: int | None = None,
) -> WeakGradOperator:
    """Build the weak-gradient operator of one cell.

    ``input_degree`` is the polynomial degree of the broken field the
    operator acts on (defaults to k; identity checks feed higher-degree
    continuous fields through the same machinery).  Quadrature orders are
    chosen so every integral below is exact: volume 2*max(m, j) + 2 and
    max(m, j) + 2 Gauss points per edge, for input degree m.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    bc = BcMode(bc)
    m = k if input_degree is None else input_degree
    jj = weak_gradient_degree(k, cell, j)

    rule = polygon_rule(mesh, cell, 2 * max(m, jj) + 2)
    basis_j = MonomialBasis.for_cell(mesh, cell, jj)
    vec = VectorBasis(basis_j)
    gram = mass_matrix(basis_j, rule)
    cho = scipy.linalg.cho_factor(gram, lower=True)
    dj = basis_j.dim
    dm = dim_poly(m)

    contributors = [cell.id]
    edge_records = []  # (edge, neighbour position in contributors or None)
    for eid in cell.edges:
        e = mesh.edges[eid]
        if e.boundary:
            edge_records.append((e, None))
        else:
            other = e.cell_right if e.cell_left == cell.id else e.cell_left
            contributors.append(other)
            edge_records.append((e, len(contributors) - 1))
    offsets = tuple(range(0, dm * (len(contributors) + 1), dm))

    in_bases = [MonomialBasis.for_cell(mesh, c, m) for c in contributors]
    rhs = np.zeros((2 * dj, offsets[-1]))

    # Volume term, cell's own block: -(v, div q)_T.
    grad_j = basis_j.grad(rule.points)
    wv = rule.weights[:, None] * in_bases[0].eval(rule.points)
    rhs[:dj, :dm] -= grad_j[:, :, 0].T @ wv
    rhs[dj:, :dm] -= grad_j[:, :, 1].T @ wv

    # Edge terms: <{v}, q . n>_dT with n outward from this cell.
    n_edge_pts = max(m, jj) + 2
    for e, pos in edge_records:
        pts, w = edge_quadrature(mesh, e, n_edge_pts)
        nrm = e.normal if e.cell_left == cell.id else (-e.normal[0], -e.normal[1])
        qn_w = vec.dot_normal(pts, nrm).T * w
        if pos is None:
            if bc is BcMode.STRONG:
                rhs[:, :dm] += qn_w @ in_bases[0].eval(pts)
            # weak mode: {v} = 0 on the boundary, no contribution
        else:
            rhs[:, :dm] += 0.5 * (qn_w @ in_bases[0].eval(pts))
            cols = slice(offsets[pos], offsets[pos + 1])
            rhs[:, cols] += 0.5 * (qn_w @ in_bases[pos].eval(pts))

    matrix = np.empty_like(rhs)
    matrix[:dj] = scipy.linalg.cho_solve(cho, rhs[:dj])
    matrix[dj:] = scipy.linalg.cho_solve(cho, rhs[dj:])
    return WeakGradOperator(
        cell.id, jj, m, tuple(contributors), offsets, matrix, vec, gram
    )


def build_all_weak_grads(
    mesh: Mesh, k: int, bc: BcMode, j: int | None = None
) -> list[WeakGradOperator]:
    """Operators for every cell, indexed by cell id."""
    return [build_weak_grad(c, mesh, k, bc, j=j) for c in mesh.cells]


def check_ibp_identity(
    cell: Cell | int,
    mesh: Mesh,
    k: int,
    bc: BcMode,
    coeffs: np.ndarray,
    j: int | None = None,
) -> float:
    """Relative residual of the integration-by-parts identity on one cell.

    For every vector basis member q the definition of the weak gradient is
    equivalent to

        (grad_w v, q)_T = (grad v, q)_T - <v - {v}, q . n>_dT,

    where v is the cell's own polynomial.  Both sides are evaluated with
    independent quadrature passes; the return value is the largest mismatch
    over q divided by the scale max(1, largest term magnitude).  Anything
    above ~1e-11 signals an inconsistency in the operator construction.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    bc = BcMode(bc)
    op = build_weak_grad(cell, mesh, k, bc, j=j)
    dj = op.basis.scalar.dim

    coeffs = np.asarray(coeffs, dtype=float)
    own = coeffs[cell.id]
    gw = op.apply(coeffs)
    lhs = np.concatenate([op.scalar_mass @ gw[:dj], op.scalar_mass @ gw[dj:]])

    rule = polygon_rule(mesh, cell, 2 * max(k, op.j) + 2)
    basis_k = MonomialBasis.for_cell(mesh, cell, k)
    basis_j = op.basis.scalar
    grad_v = np.einsum("pdc,d->pc", basis_k.grad(rule.points), own)
    bj = basis_j.eval(rule.points)
    volume = np.concatenate(
        [bj.T @ (rule.weights * grad_v[:, 0]), bj.T @ (rule.weights * grad_v[:, 1])]
    )

    boundary_term = np.zeros(2 * dj)
    n_edge_pts = max(k, op.j) + 2
    for eid in cell.edges:
        e = mesh.edges[eid]
        pts, w = edge_quadrature(mesh, e, n_edge_pts)
        nrm = e.normal if e.cell_left == cell.id else (-e.normal[0], -e.normal[1])
        own_trace = basis_k.eval(pts) @ own
        if e.boundary:
            if bc is BcMode.STRONG:
                continue  # v - {v} = 0
            mismatch = own_trace  # weak mode: {v} = 0
        else:
            other = e.cell_right if e.cell_left == cell.id else e.cell_left
            other_trace = MonomialBasis.for_cell(mesh, other, k).eval(pts) @ coeffs[other]
            mismatch = 0.5 * (own_trace - other_trace)
        boundary_term += op.basis.dot_normal(pts, nrm).T @ (w * mismatch)

    residual = np.max(np.abs(lhs - volume + boundary_term))
    scale = max(1.0, float(np.max(np.abs(lhs) + np.abs(volume) + np.abs(boundary_term))))
    return residual / scale


def projected_gradient(
    mesh: Mesh, cell: Cell | int, coeffs_cell: np.ndarray, m: int, j: int
) -> np.ndarray:
    """Exact [P_j]^2 projection of the gradient of a degree-m cell polynomial.

    Differentiation is exact in coefficient space; the projection of the
    resulting degree-(m-1) components onto P_j uses a polynomial-exact rule,
    so the result is accurate to roundoff.  Returns stacked coefficients in
    the cell's degree-j vector basis.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    basis_m = MonomialBasis.for_cell(mesh, cell, m)
    g = gradient_coeffs(basis_m, np.asarray(coeffs_cell, dtype=float))
    if m - 1 <= j:
        # The gradient already lives in P_j: embed the coefficients.
        out = np.zeros(2 * dim_poly(j))
        out[: g.shape[1]] = g[0]
        out[dim_poly(j) : dim_poly(j) + g.shape[1]] = g[1]
        return out
    basis_j = MonomialBasis.for_cell(mesh, cell, j)
    rule = polygon_rule(mesh, cell, (m - 1) + j)
    cross = cross_mass_matrix(basis_j, MonomialBasis.for_cell(mesh, cell, m - 1), rule)
    gram = mass_matrix(basis_j, polygon_rule(mesh, cell, 2 * j))
    cho = scipy.linalg.cho_factor(gram, lower=True)
    return np.concatenate(
        [scipy.linalg.cho_solve(cho, cross @ g[0]), scipy.linalg.cho_solve(cho, cross @ g[1])]
    )

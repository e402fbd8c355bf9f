"""Scaled monomial bases and positive-weight quadrature on polytopal cells.

Scalar basis on a cell T with centroid x_T and diameter h_T:

    phi_a(x, y) = ((x - x_T)/h_T)**a1 * ((y - y_T)/h_T)**a2,   a1 + a2 <= m,

listed in graded lexicographic order (by total degree, then x-power
descending), dim P_m = (m+1)(m+2)/2.  The centering/scaling keeps the local
Gram matrices uniformly conditioned under refinement.  The vector basis on T
is two stacked copies: members 0..D-1 are (phi_a, 0), members D..2D-1 are
(0, phi_a).

Volume quadrature is the collapsed tensor product on the reference triangle
(Gauss-Legendre x Gauss-Jacobi with weight (1-t)), which has strictly
positive weights and is exact to the requested total degree; polygons are
fan-triangulated about the area centroid.  Edge quadrature is plain
Gauss-Legendre.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.special import roots_jacobi

from .mesh import Cell, Mesh

MAX_VOLUME_ORDER = 30


class QuadratureError(ValueError):
    """Raised for unusable quadrature requests or singular local Grams."""


def dim_poly(degree: int) -> int:
    """Dimension of the bivariate polynomial space P_degree."""
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent pairs of P_degree in graded-lex order, shape (D, 2)."""
    exps = [(d - m, m) for d in range(degree + 1) for m in range(d + 1)]
    arr = np.array(exps, dtype=int)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MonomialBasis:
    """Centroid-centered, diameter-scaled monomials on one cell."""

    degree: int
    centroid: tuple[float, float]
    scale: float
    cell_id: int | None = None

    @classmethod
    def for_cell(cls, mesh: Mesh, cell: Cell | int, degree: int) -> "MonomialBasis":
        if isinstance(cell, int):
            cell = mesh.cells[cell]
        return cls(degree, cell.centroid, cell.diameter, cell.id)

    @property
    def dim(self) -> int:
        return dim_poly(self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.degree)

    def _local(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        sx = (pts[:, 0] - self.centroid[0]) / self.scale
        sy = (pts[:, 1] - self.centroid[1]) / self.scale
        return sx, sy

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values at points, shape (n_points, dim)."""
        sx, sy = self._local(points)
        ex = self.exponents
        return sx[:, None] ** ex[:, 0] * sy[:, None] ** ex[:, 1]

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Basis gradients at points, shape (n_points, dim, 2)."""
        sx, sy = self._local(points)
        ex = self.exponents
        a1, a2 = ex[:, 0], ex[:, 1]
        # x^(a-1) with the a=0 term killed by the leading factor a.
        px = sx[:, None] ** np.maximum(a1 - 1, 0)
        py = sy[:, None] ** np.maximum(a2 - 1, 0)
        full_x = sx[:, None] ** a1
        full_y = sy[:, None] ** a2
        out = np.empty((len(sx), len(a1), 2))
        out[:, :, 0] = (a1 / self.scale) * px * full_y
        out[:, :, 1] = (a2 / self.scale) * full_x * py
        return out


@dataclass(frozen=True)
class VectorBasis:
    """[P_j]^2 on a cell as two stacked scalar blocks (x-block then y-block)."""

    scalar: MonomialBasis

    @property
    def degree(self) -> int:
        return self.scalar.degree

    @property
    def dim(self) -> int:
        return 2 * self.scalar.dim

    def divergence(self, points: np.ndarray) -> np.ndarray:
        """div q_a at points, shape (n_points, dim)."""
        g = self.scalar.grad(points)
        return np.concatenate([g[:, :, 0], g[:, :, 1]], axis=1)

    def dot_normal(self, points: np.ndarray, normal: tuple[float, float]) -> np.ndarray:
        """q_a . n at points, shape (n_points, dim)."""
        vals = self.scalar.eval(points)
        return np.concatenate([vals * normal[0], vals * normal[1]], axis=1)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 2) volume rules; (n,) for the 1D edge rule
    weights: np.ndarray  # (n,)
    exactness: int  # exact for total degree <= exactness

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        return self.weights @ values


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle (0,0),(1,0),(0,1).

    Collapsed tensor construction: n-point Gauss-Legendre in the first
    coordinate and n-point Gauss-Jacobi (weight 1-t) in the second, mapped by
    (x, y) = (s*(1-t), t).  Exact for all total degrees <= 2n-1 >= order.
    """
    if not 0 <= order <= MAX_VOLUME_ORDER:
        raise QuadratureError(f"triangle rule order must be in [0, {MAX_VOLUME_ORDER}]")
    n = max(1, (order + 2) // 2)
    gl_x, gl_w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (gl_x + 1.0)  # Gauss-Legendre on [0, 1]
    sw = 0.5 * gl_w
    gj_x, gj_w = roots_jacobi(n, 1.0, 0.0)
    t = 0.5 * (gj_x + 1.0)  # weight (1-t) on [0, 1]: absorb the 1/4 Jacobian
    tw = 0.25 * gj_w

    ss, tt = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([(ss * (1.0 - tt)).ravel(), tt.ravel()])
    wts = np.outer(sw, tw).ravel()
    if np.any(wts <= 0.0):
        raise QuadratureError("triangle rule produced non-positive weights")
    return QuadratureRule(pts, wts, 2 * n - 1)


def _map_rule_to_triangle(rule: QuadratureRule, tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = tri
    jac = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    pts = a + np.outer(rule.points[:, 0], b - a) + np.outer(rule.points[:, 1], c - a)
    return pts, rule.weights * jac


def polygon_rule(mesh: Mesh, cell: Cell | int, order: int) -> QuadratureRule:
    """Volume rule on a convex cell, exact for total degree <= order.

    Triangles get the reference rule mapped directly; other polygons are
    fan-triangulated about the area centroid (inside, by convexity) with the
    reference rule mapped to each sub-triangle.  All weights stay positive.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    base = triangle_rule(order)
    pts = mesh.cell_points(cell)
    if cell.is_triangle:
        p, w = _map_rule_to_triangle(base, pts)
        return QuadratureRule(p, w, base.exactness)
    center = np.array(cell.centroid)
    chunks_p, chunks_w = [], []
    for i in range(len(pts)):
        tri = np.array([center, pts[i], pts[(i + 1) % len(pts)]])
        p, w = _map_rule_to_triangle(base, tri)
        chunks_p.append(p)
        chunks_w.append(w)
    return QuadratureRule(np.concatenate(chunks_p), np.concatenate(chunks_w), base.exactness)


@lru_cache(maxsize=None)
def edge_rule(n_points: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1], exact to degree 2*n_points - 1."""
    if n_points < 1:
        raise QuadratureError("edge rule needs at least one point")
    x, w = np.polynomial.legendre.leggauss(n_points)
    return QuadratureRule(x, w, 2 * n_points - 1)


def edge_quadrature(mesh: Mesh, edge, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Mapped edge rule: points (n, 2) in the plane, weights summing to |e|."""
    if isinstance(edge, int):
        edge = mesh.edges[edge]
    p = mesh.edge_points(edge)
    base = edge_rule(n_points)
    mid = 0.5 * (p[0] + p[1])
    half = 0.5 * (p[1] - p[0])
    pts = mid + np.outer(base.points, half)
    return pts, base.weights * (edge.length / 2.0)


def mass_matrix(basis: MonomialBasis | VectorBasis, rule: QuadratureRule) -> np.ndarray:
    """Gram matrix of the basis under the given (cell-mapped) rule.

    The rule must be exact to twice the basis degree; the vector Gram is
    block-diagonal because the two component blocks are orthogonal.
    """
    if isinstance(basis, VectorBasis):
        m = mass_matrix(basis.scalar, rule)
        return scipy.linalg.block_diag(m, m)
    if rule.exactness < 2 * basis.degree:
        raise QuadratureError(
            f"rule exact to degree {rule.exactness} cannot integrate a degree-"
            f"{basis.degree} Gram matrix"
        )
    vals = basis.eval(rule.points)
    m = vals.T @ (rule.weights[:, None] * vals)
    return 0.5 * (m + m.T)


def cross_mass_matrix(
    row_basis: MonomialBasis, col_basis: MonomialBasis, rule: QuadratureRule
) -> np.ndarray:
    """Pairings (phi_row, phi_col) under the rule, shape (dim_row, dim_col)."""
    if rule.exactness < row_basis.degree + col_basis.degree:
        raise QuadratureError("rule too weak for the requested pairing")
    rv = row_basis.eval(rule.points)
    cv = col_basis.eval(rule.points)
    return rv.T @ (rule.weights[:, None] * cv)


def _cholesky(m: np.ndarray):
    try:
        return scipy.linalg.cho_factor(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise QuadratureError(f"singular local Gram matrix ({exc})") from exc


def project_scalar(f, mesh: Mesh, cell: Cell | int, k: int, order: int | None = None) -> np.ndarray:
    """L2 projection of f onto P_k(T); returns monomial coefficients.

    f is called with an (n, 2) point array and must return (n,) values.  The
    default order 2k+6 leaves transcendental integrands a comfortable margin;
    polynomial callers can pass the exact order.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    rule = polygon_rule(mesh, cell, order if order is not None else 2 * k + 6)
    basis = MonomialBasis.for_cell(mesh, cell, k)
    m = mass_matrix(basis, rule)
    rhs = basis.eval(rule.points).T @ (rule.weights * np.asarray(f(rule.points), dtype=float))
    return scipy.linalg.cho_solve(_cholesky(m), rhs)


def project_vector(g, mesh: Mesh, cell: Cell | int, j: int, order: int | None = None) -> np.ndarray:
    """L2 projection of a vector field onto [P_j(T)]^2, stacked coefficients.

    g is called with (n, 2) points and must return an (n, 2) array.  The two
    component blocks decouple, so one Cholesky factor serves both.
    """
    if isinstance(cell, int):
        cell = mesh.cells[cell]
    rule = polygon_rule(mesh, cell, order if order is not None else 2 * j + 6)
    basis = MonomialBasis.for_cell(mesh, cell, j)
    m = mass_matrix(basis, rule)
    vals = basis.eval(rule.points)
    gv = np.asarray(g(rule.points), dtype=float)
    cho = _cholesky(m)
    cx = scipy.linalg.cho_solve(cho, vals.T @ (rule.weights * gv[:, 0]))
    cy = scipy.linalg.cho_solve(cho, vals.T @ (rule.weights * gv[:, 1]))
    return np.concatenate([cx, cy])


def gradient_coeffs(basis: MonomialBasis, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of (d/dx, d/dy) of a polynomial in the degree-(m-1) basis.

    Input: coefficients in the degree-m basis of the same cell.  Output shape
    (2, dim P_{m-1}).  Exact: differentiation maps scaled monomials onto
    scaled monomials one degree down with factor a_i / h_T.
    """
    m = basis.degree
    if m == 0:
        return np.zeros((2, 1))
    ex = basis.exponents
    lower = {tuple(e): i for i, e in enumerate(monomial_exponents(m - 1))}
    out = np.zeros((2, dim_poly(m - 1)))
    for i, (a1, a2) in enumerate(ex):
        if a1 > 0:
            out[0, lower[(a1 - 1, a2)]] += coeffs[i] * a1 / basis.scale
        if a2 > 0:
            out[1, lower[(a1, a2 - 1)]] += coeffs[i] * a2 / basis.scale
    return out

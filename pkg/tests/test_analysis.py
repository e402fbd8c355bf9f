import math

import numpy as np
import pytest

import oracles
from polycdg.analysis import (
    ErrorReport,
    energy_error,
    energy_error_per_cell,
    energy_norm,
    h1h_components,
    h1h_gram,
    h1h_norm,
    l2_error,
    norm_equivalence_probe,
    rates,
)
from polycdg.cli import exact_gradient, exact_solution, source_term
from polycdg.mesh import gen_polygonal, gen_triangular
from polycdg.quadbasis import dim_poly, project_scalar
from polycdg.system import assemble, build_dof_map, solve
from polycdg.weakgrad import BcMode, build_all_weak_grads


def broken_field(mesh, k, f, order=None):
    return np.array([project_scalar(f, mesh, c, k, order=order) for c in mesh.cells])


def bubble(p):
    return p[:, 0] * (1 - p[:, 0]) * p[:, 1] * (1 - p[:, 1])


def bubble_grad(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)])


# ----------------------------------------------------------------- l2 error --

def test_l2_error_zero_for_projection(tri2):
    coeffs = broken_field(tri2, 2, exact_solution)
    assert l2_error(coeffs, exact_solution, tri2, 2) <= 1e-13


def test_l2_error_scales_with_perturbation(tri2):
    coeffs = broken_field(tri2, 1, exact_solution)
    cell = tri2.cells[3]
    coeffs[cell.id, 0] += 1.0  # constant-mode bump on one cell
    err = l2_error(coeffs, exact_solution, tri2, 1)
    assert err == pytest.approx(math.sqrt(cell.area), rel=1e-12)


# -------------------------------------------------------------- energy error --

@pytest.mark.parametrize("bc", [BcMode.STRONG, BcMode.WEAK])
def test_energy_error_zero_for_zero_trace_polynomial(tri2, bc):
    """The quartic bubble lies in the k=4 space with zero boundary trace, so
    its projection has weak gradient equal to the projected gradient and the
    energy error vanishes in both modes."""
    coeffs = broken_field(tri2, 4, bubble, order=10)
    assert energy_error(coeffs, bubble_grad, tri2, 4, bc) <= 1e-11


def test_energy_error_per_cell_sums(tri3):
    system = assemble(tri3, 1, BcMode.WEAK, source_term)
    sol = solve(system)
    per_cell = energy_error_per_cell(sol, exact_gradient, tri3, 1, BcMode.WEAK)
    assert per_cell.shape == (tri3.n_cells,)
    assert np.all(per_cell >= 0)
    total = energy_error(sol, exact_gradient, tri3, 1, BcMode.WEAK)
    assert total == pytest.approx(math.sqrt(per_cell.sum()), rel=1e-14)


def test_energy_norm_of_global_affine_strong(tri2):
    coeffs = broken_field(tri2, 1, lambda p: p[:, 0] + p[:, 1], order=2)
    ops = build_all_weak_grads(tri2, 1, BcMode.STRONG)
    assert energy_norm(coeffs, tri2, ops) == pytest.approx(math.sqrt(2), rel=1e-12)


# ------------------------------------------------------------- broken norms --

def test_h1h_of_cell_indicator(tri2):
    interior = next(
        c for c in tri2.cells if all(not tri2.edges[e].boundary for e in c.edges)
    )
    coeffs = np.zeros((tri2.n_cells, dim_poly(1)))
    coeffs[interior.id, 0] = 1.0
    g, j = h1h_components(coeffs, tri2, 1)
    assert g == 0.0
    assert j == pytest.approx(math.sqrt(3), rel=1e-12)


def test_h1h_continuous_zero_trace_field_has_no_jumps(tri3, rng):
    nodal = {
        v.id: 0.0 if (v.x in (0.0, 1.0) or v.y in (0.0, 1.0)) else rng.standard_normal()
        for v in tri3.vertices
    }
    rows = []
    for c in tri3.cells:
        pts = np.array([(tri3.vertices[v].x, tri3.vertices[v].y) for v in c.vertices])
        vals = np.array([nodal[v] for v in c.vertices])
        a = np.linalg.solve(np.column_stack([np.ones(3), pts]), vals)
        rows.append(
            project_scalar(
                lambda p: a[0] + a[1] * p[:, 0] + a[2] * p[:, 1], tri3, c, 1, order=2
            )
        )
    coeffs = np.array(rows)
    g, j = h1h_components(coeffs, tri3, 1)
    assert j <= 1e-12
    assert g > 0.1


def test_h1h_vanishes_only_at_zero(tri2, rng):
    assert h1h_norm(np.zeros((tri2.n_cells, 3)), tri2, 1) == 0.0
    v = rng.standard_normal((tri2.n_cells, 3))
    assert h1h_norm(v, tri2, 1) > 0.1


@pytest.mark.parametrize("k", [1, 2])
def test_h1h_matches_exact_oracle(tri2, poly1, rng, k):
    for msh in (tri2, poly1):
        coeffs = rng.standard_normal((msh.n_cells, dim_poly(k)))
        got = h1h_norm(coeffs, msh, k)
        want = oracles.h1h_oracle(msh, coeffs, k)
        assert got == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("bc", [BcMode.STRONG, BcMode.WEAK])
def test_h1h_gram_matches_norm(tri2, poly1, rng, k, bc):
    """x'Hx reproduces the (oracle-validated) field-wise h1h norm, squared,
    for random members of the DOF space in both modes."""
    for msh in (tri2, poly1):
        dof_map = build_dof_map(msh, k, bc)
        h = h1h_gram(msh, k, dof_map)
        assert (abs(h - h.T) > 1e-14 * abs(h).max()).nnz == 0
        for _ in range(3):
            x = rng.standard_normal(dof_map.n_dofs)
            want = h1h_norm(dof_map.expand(x, msh.n_cells), msh, k) ** 2
            assert float(x @ (h @ x)) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("bc", [BcMode.STRONG, BcMode.WEAK])
def test_stiffness_is_energy_gram(tri2, rng, bc):
    """x'Ax of the assembled matrix equals |||expand(x)|||^2: the probe's
    pencil reuses the stiffness matrix as the energy Gram."""
    ops = build_all_weak_grads(tri2, 1, bc)
    a = assemble(tri2, 1, bc, source_term, ops=ops).matrix
    dof_map = build_dof_map(tri2, 1, bc)
    for _ in range(3):
        x = rng.standard_normal(dof_map.n_dofs)
        want = energy_norm(dof_map.expand(x, tri2.n_cells), tri2, ops) ** 2
        assert float(x @ (a @ x)) == pytest.approx(want, rel=1e-11)


# -------------------------------------------------------------------- probe --

def test_probe_deterministic_and_bounded(tri2):
    a = norm_equivalence_probe(tri2, 1, BcMode.WEAK, n_samples=20, seed=7)
    b = norm_equivalence_probe(tri2, 1, BcMode.WEAK, n_samples=20, seed=7)
    assert (a.min_ratio, a.max_ratio) == (b.min_ratio, b.max_ratio)
    assert 0 < a.min_ratio <= a.max_ratio < 10
    assert (a.n_samples, a.seed) == (20, 7)


def test_probe_ratio_stable_under_refinement():
    mins = []
    for level in (2, 3, 4):
        r = norm_equivalence_probe(gen_triangular(level), 1, BcMode.WEAK, n_samples=30, seed=1)
        mins.append(r.min_ratio)
    assert min(mins) > 0.25 * max(mins)  # no collapse across levels


# -------------------------------------------------------------------- rates --

def make_report(level, l2, en):
    return ErrorReport(level, 10, l2, en, 0.0, 0.0)


def test_rates_log2():
    reps = rates([make_report(1, 4e-2, 8e-2), make_report(2, 1e-2, 4e-2)])
    assert reps[0].l2_rate is None
    assert reps[1].l2_rate == pytest.approx(2.0)
    assert reps[1].energy_rate == pytest.approx(1.0)


def test_rates_degenerate_cases():
    reps = rates([make_report(1, 1e-2, 0.0), make_report(2, 1e-2, 1e-3)])
    assert reps[1].l2_rate == pytest.approx(0.0)
    assert reps[1].energy_rate is None


# ------------------------------------------------- frozen regression anchors --

ANCHORS = [
    # (k, bc, l2, energy, n_dofs) on the level-3 triangulation
    (1, BcMode.STRONG, 5.9820627888e-02, 7.4307002696e-01, 66),
    (1, BcMode.WEAK, 3.8527131479e-02, 6.0457191960e-01, 96),
    (2, BcMode.STRONG, 2.3318546166e-03, 1.0223268395e-01, 146),
    (2, BcMode.WEAK, 1.5537881995e-03, 8.5636053925e-02, 192),
    (3, BcMode.STRONG, 2.1924896180e-04, 1.1315360715e-02, 258),
]


@pytest.mark.parametrize("k,bc,l2,en,n", ANCHORS, ids=lambda v: str(getattr(v, "value", v)))
def test_level3_regression_anchors(tri3, k, bc, l2, en, n):
    system = assemble(tri3, k, bc, source_term)
    assert system.n_dofs == n
    sol = solve(system)
    assert l2_error(sol, exact_solution, tri3, k) == pytest.approx(l2, rel=1e-8)
    assert energy_error(sol, exact_gradient, tri3, k, bc) == pytest.approx(en, rel=1e-8)


# ------------------------------------------------- dense-solver cross-check --

@pytest.mark.parametrize("bc", ["strong", "weak"])
def test_full_solve_matches_dense_oracle_triangles(tri2, bc):
    ora_l2, ora_en = oracles.solve_cdg(tri2, 1, bc, 2, oracles.uex, oracles.fsrc)
    system = assemble(tri2, 1, BcMode(bc), source_term)
    sol = solve(system, tol=1e-13)
    assert l2_error(sol, exact_solution, tri2, 1) == pytest.approx(ora_l2, rel=2e-8)
    assert energy_error(sol, exact_gradient, tri2, 1, BcMode(bc)) == pytest.approx(
        ora_en, rel=2e-8
    )


def test_full_solve_matches_dense_oracle_polygons(poly1):
    ora_l2, ora_en = oracles.solve_cdg(poly1, 1, "weak", 3, oracles.uex, oracles.fsrc)
    system = assemble(poly1, 1, BcMode.WEAK, source_term, j=3)
    sol = solve(system, tol=1e-13)
    assert l2_error(sol, exact_solution, poly1, 1) == pytest.approx(ora_l2, rel=2e-8)
    assert energy_error(sol, exact_gradient, poly1, 1, BcMode.WEAK, j=3) == pytest.approx(
        ora_en, rel=2e-8
    )

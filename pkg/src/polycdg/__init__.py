"""Stabilizer-free conforming DG solver for the 2D Poisson problem.

The discrete space is a broken polynomial space on a triangular or convex
polygonal partition of the unit square; the bilinear form pairs weak
gradients lifted to a higher-degree vector space, with no penalty term.
Boundary conditions enter either through trace-constrained local bases
(strong mode) or through a zero boundary average inside the weak gradient
(weak mode).
"""

from .analysis import (
    ErrorReport,
    ProbeResult,
    energy_error,
    energy_norm,
    h1h_components,
    h1h_norm,
    l2_error,
    norm_equivalence_probe,
    rates,
)
from .cli import ConvergenceReport, StudyConfig, emit_table, main, run_convergence
from .mesh import (
    FAMILY_POLYGONAL,
    FAMILY_TRIANGULAR,
    Mesh,
    MeshError,
    MeshParseError,
    build_mesh,
    gen_polygonal,
    gen_triangular,
    read_mesh,
    validate,
    write_mesh,
)
from .quadbasis import (
    MonomialBasis,
    QuadratureError,
    QuadratureRule,
    VectorBasis,
    dim_poly,
    edge_rule,
    mass_matrix,
    polygon_rule,
    project_scalar,
    project_vector,
    triangle_rule,
)
from .system import (
    DofMap,
    IndefiniteOperatorError,
    Solution,
    SolverError,
    SparseSystem,
    assemble,
    build_dof_map,
    constrained_boundary_basis,
    solve,
    sparsity_pattern,
)
from .weakgrad import (
    BcMode,
    WeakGradOperator,
    build_all_weak_grads,
    build_weak_grad,
    check_ibp_identity,
    weak_gradient_degree,
)

__version__ = "0.1.0"

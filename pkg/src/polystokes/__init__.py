"""Discrete Stokes complex on polygonal meshes, with a saddle-point solver.

The package builds, at arbitrary polynomial degree k >= 0, the 2d exact
sequence stream -> velocity -> pressure together with the Jacobian
reconstruction into a matrix-valued space, stabilized L2 products, and a
Stokes solver with Neumann / Dirichlet / mixed boundary conditions plus a
manufactured-solution convergence harness.
"""

from .mesh import (Mesh, MeshError, RegularityReport, canonical_json,
                   cell_geometry, generate_cartesian, generate_hexagonal,
                   load_mesh, perturb, regularity_report)
from .operators import LocalOperators, build_local_operators, global_operator
from .polyspace import Basis, CellContext, EdgeContext, space_dimension
from .products import (LocalProducts, build_local_products, component_norms,
                       h1_norm, product_l2mat, product_tgrad)
from .spaces import (DiscreteSpaces, DofMap, DofVector, dof_map,
                     load_dofvector, save_dofvector)
from .stokes import (ErrorReport, ManufacturedSolution, SaddleSystem,
                     SolverError, StokesProblem, assemble, convergence_study,
                     error_report, manufactured, run_case, solve)

__version__ = "0.1.0"

__all__ = [
    "Mesh", "MeshError", "RegularityReport", "canonical_json", "cell_geometry",
    "generate_cartesian", "generate_hexagonal", "load_mesh", "perturb",
    "regularity_report", "LocalOperators", "build_local_operators",
    "global_operator", "Basis", "CellContext", "EdgeContext", "space_dimension",
    "LocalProducts", "build_local_products", "component_norms", "h1_norm",
    "product_l2mat", "product_tgrad", "DiscreteSpaces", "DofMap", "DofVector",
    "dof_map", "load_dofvector", "save_dofvector", "ErrorReport",
    "ManufacturedSolution", "SaddleSystem", "SolverError", "StokesProblem",
    "assemble", "convergence_study", "error_report", "manufactured",
    "run_case", "solve",
]

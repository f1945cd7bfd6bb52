"""Finite-element laboratory for the Laplacian with Wentzell (dynamic)
boundary conditions on 2D polygonal domains.

The discrete product space (interior L2 plus boundary L2) is carried by the
Gram matrix G = M + B of the conforming trace embedding; see
wentzell_lab.semigroup for the operator realization.
"""

from .assembly import (BoundaryCoefficient, OperatorBundle, ProductState,
                       assemble, discrete_normal_derivative,
                       shifted_form_matrix)
from .mesh import (MeshQualityReport, TriMesh, generate_lshape,
                   generate_rectangle, quality_report, read_mesh, write_mesh)
from .semigroup import (SectorEstimate, Trajectory, WentzellOperator,
                        choose_omega0, evolve, robin_solve, sector_estimate)

__version__ = "0.1.0"

__all__ = [
    "TriMesh", "MeshQualityReport", "generate_rectangle", "generate_lshape",
    "read_mesh", "write_mesh", "quality_report",
    "BoundaryCoefficient", "OperatorBundle", "ProductState", "assemble",
    "shifted_form_matrix", "discrete_normal_derivative",
    "WentzellOperator", "SectorEstimate", "Trajectory", "choose_omega0",
    "evolve", "robin_solve", "sector_estimate",
    "__version__",
]

"""Non-nested multilevel solver for the Poisson equation on scattered points.

The discretization is local polyharmonic-spline interpolation with appended
monomials; levels are independent point sets linked by RBF transfers.
"""

from .assembly import DiscreteProblem, assemble_poisson, regularize_all_neumann
from .cloud import Cloud, build_clouds
from .harness import BenchmarkConfig, ManufacturedCase, build_hierarchy, run_benchmark
from .pointset import DIRICHLET, INTERIOR, NEUMANN, Geometry, PointSet, generate_pointset
from .rbf import LocalSystem, cloud_size, monomial_count
from .solver import LevelHierarchy, solve_ml_gmres, solve_multilevel, v_cycle
from .transfer import build_transfer

__version__ = "0.1.0"

__all__ = [
    "DIRICHLET",
    "INTERIOR",
    "NEUMANN",
    "BenchmarkConfig",
    "Cloud",
    "DiscreteProblem",
    "Geometry",
    "LevelHierarchy",
    "LocalSystem",
    "ManufacturedCase",
    "PointSet",
    "assemble_poisson",
    "build_clouds",
    "build_hierarchy",
    "build_transfer",
    "cloud_size",
    "generate_pointset",
    "monomial_count",
    "regularize_all_neumann",
    "run_benchmark",
    "solve_ml_gmres",
    "solve_multilevel",
    "v_cycle",
]

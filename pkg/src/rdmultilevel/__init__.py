"""Multilevel solvers for -div(omega grad u) + rho u = f with discontinuous coefficients."""

from .assembly import assemble_load, assemble_mass, assemble_operator, assemble_stiffness
from .coefficients import CoefficientField, SubdomainInfo, analyze_subdomains, classify_case
from .errors import (
    CoarseSolveError,
    ConfigurationError,
    DefinitenessError,
    DivergenceError,
    DomainError,
    GeometryError,
    InsufficientDataError,
    MeshError,
    StructureError,
)
from .krylov import SolveReport, lanczos_estimates, pcg, stationary_solve
from .mesh import Mesh, MeshHierarchy, build_cube_mesh, build_hierarchy, build_square_mesh, refine_uniform
from .multilevel import LevelStack, build_level_stack, build_prolongation, make_preconditioner
from .problems import Problem, benchmark_hierarchy, setup_problem
from .spectral import SpectralReport, dense_spectrum, detect_isolated, effective_condition

__version__ = "0.1.0"

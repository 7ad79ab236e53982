"""Benchmark problem setup shared by the CLI, the tests and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_load, assemble_operator
from .coefficients import CoefficientField
from .errors import ConfigurationError
from .krylov import SolveReport, pcg, stationary_solve
from .mesh import DEFAULT_INCLUSIONS, MeshHierarchy, build_cube_mesh, build_hierarchy, build_square_mesh
from .multilevel import LevelStack, Preconditioner, build_prolongation, build_level_stack, make_preconditioner

GEOMETRIES = ("cube3d", "square2d")
DEFAULT_COARSE_CELLS = {"cube3d": 4, "square2d": 6}


def _freeze_inclusions(inclusions):
    if inclusions is None:
        return None
    return tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in inclusions)


@lru_cache(maxsize=8)
def _cached_hierarchy(geometry: str, levels: int, coarse_cells: int, seed: int, inclusions) -> MeshHierarchy:
    if geometry == "cube3d":
        coarse = build_cube_mesh(coarse_cells, inclusions)
    else:
        coarse = build_square_mesh(coarse_cells, assignment_seed=seed)
    return build_hierarchy(coarse, levels)


def benchmark_hierarchy(
    geometry: str = "cube3d",
    levels: int = 1,
    coarse_cells: int | None = None,
    seed: int = 0,
    inclusions=DEFAULT_INCLUSIONS,
) -> MeshHierarchy:
    """Hierarchy ``0..levels`` of one of the benchmark geometries (cached)."""
    if geometry not in GEOMETRIES:
        raise ConfigurationError(f"unknown geometry {geometry!r}; choose from {GEOMETRIES}")
    n = DEFAULT_COARSE_CELLS[geometry] if coarse_cells is None else int(coarse_cells)
    return _cached_hierarchy(geometry, int(levels), n, int(seed), _freeze_inclusions(inclusions))


_P_CACHE: dict = {}


def prolongations(hierarchy: MeshHierarchy) -> list[sp.csr_matrix]:
    """Free-vertex prolongations ``P_1..P_L``, memoized per hierarchy object."""
    key = id(hierarchy)
    hit = _P_CACHE.get(key)
    if hit is None or hit[0] is not hierarchy:
        if len(_P_CACHE) >= 8:
            _P_CACHE.pop(next(iter(_P_CACHE)))
        hit = (hierarchy, [build_prolongation(hierarchy, k) for k in range(1, hierarchy.L + 1)])
        _P_CACHE[key] = hit
    return list(hit[1])


def coefficient_pair(omega, rho) -> tuple[CoefficientField, CoefficientField]:
    """Coerce sequences or fields into named (omega, rho) coefficient fields."""
    if not isinstance(omega, CoefficientField):
        omega = CoefficientField.from_list(omega, "omega")
    if not isinstance(rho, CoefficientField):
        rho = CoefficientField.from_list(rho, "rho")
    return omega, rho


@dataclass
class Problem:
    """Finest-level system ``A u = b`` with its Galerkin level stack."""

    hierarchy: MeshHierarchy
    omega: CoefficientField
    rho: CoefficientField
    A: sp.csr_matrix
    b: np.ndarray
    stack: LevelStack
    _precs: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def preconditioner(self, kind: str) -> Preconditioner:
        if kind not in self._precs:
            self._precs[kind] = make_preconditioner(kind, self.A, self.stack)
        return self._precs[kind]

    def solve(self, kind: str, tol: float = 1e-12, max_iter: int = 2000, stationary: bool = False) -> SolveReport:
        B = self.preconditioner(kind)
        if stationary:
            return stationary_solve(self.A, B, self.b, tol=tol, max_iter=max_iter)
        return pcg(self.A, B, self.b, tol=tol, max_iter=max_iter)


def setup_problem(hierarchy: MeshHierarchy, omega, rho, f_const: float = 1.0) -> Problem:
    """Assemble the finest operator and load and build the level stack."""
    omega, rho = coefficient_pair(omega, rho)
    A = assemble_operator(hierarchy.finest, omega, rho)
    b = assemble_load(hierarchy.finest, f_const)
    stack = build_level_stack(A, prolongations(hierarchy))
    return Problem(hierarchy, omega, rho, stack.levels[-1].A, b, stack)

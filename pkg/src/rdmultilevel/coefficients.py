"""Piecewise-constant diffusion/reaction coefficients and subdomain bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, DomainError
from .mesh import Mesh, boundary_facets, interior_facet_pairs


@dataclass(frozen=True)
class CoefficientField:
    """One nonnegative value per subdomain index.

    ``name`` is a role tag: ``"omega"`` fields must be strictly positive,
    ``"rho"`` fields may contain zeros.
    """

    values: Mapping[int, float]
    name: str = "omega"

    def __post_init__(self):
        vals = {int(k): float(v) for k, v in dict(self.values).items()}
        object.__setattr__(self, "values", vals)
        for m, v in vals.items():
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"{self.name}[{m}] = {v} must be finite and >= 0")
            if self.name == "omega" and v == 0:
                raise DomainError(f"omega[{m}] must be strictly positive")

    @classmethod
    def from_list(cls, values: Iterable[float], name: str = "omega") -> "CoefficientField":
        """Values for subdomains 1, 2, ... in order."""
        return cls({m + 1: v for m, v in enumerate(values)}, name)

    @classmethod
    def constant(cls, value: float, subdomains: Iterable[int] = (1, 2), name: str = "omega"):
        return cls({int(m): value for m in subdomains}, name)

    def __getitem__(self, m: int) -> float:
        try:
            return self.values[int(m)]
        except KeyError:
            raise ConfigurationError(f"no {self.name} value for subdomain {m}") from None

    def as_list(self) -> list[float]:
        return [self.values[m] for m in sorted(self.values)]

    def per_cell(self, cell_subdomain: np.ndarray) -> np.ndarray:
        labels = np.unique(cell_subdomain)
        missing = [int(m) for m in labels if int(m) not in self.values]
        if missing:
            raise ConfigurationError(f"no {self.name} value for subdomain(s) {missing}")
        lut = np.zeros(int(labels.max()) + 1)
        for m, v in self.values.items():
            if m < lut.size:
                lut[m] = v
        return lut[cell_subdomain]

    def scaled(self, c: float) -> "CoefficientField":
        return CoefficientField({m: c * v for m, v in self.values.items()}, self.name)

    def __str__(self) -> str:
        return ",".join(f"{v:g}" for v in self.as_list())


def jump_ratio(field: CoefficientField) -> float:
    """max/min of the field values.

    Zero reaction values are skipped; any zero left over (or an all-zero
    field) leaves the ratio undefined.
    """
    vals = np.array(list(field.values.values()), dtype=float)
    if field.name == "rho":
        vals = vals[vals != 0]
    if vals.size == 0 or np.any(vals <= 0):
        raise DomainError(f"jump ratio of {field.name} undefined for values {field.as_list()}")
    return float(vals.max() / vals.min())


def mesh_coefficient(omega: CoefficientField, rho: CoefficientField, h: float) -> CoefficientField:
    """Per-subdomain ``omega + h**2 * rho``."""
    if h <= 0:
        raise DomainError(f"mesh size must be positive, got {h}")
    keys = set(omega.values) | set(rho.values)
    return CoefficientField({m: omega[m] + h * h * rho[m] for m in keys}, "omega")


@dataclass(frozen=True)
class SubdomainInfo:
    floating_index_set: frozenset
    m0: int
    ordering: tuple[int, ...]

    def rank(self) -> dict[int, int]:
        """Position of each subdomain in ``ordering`` (0 = first/largest)."""
        return {m: i for i, m in enumerate(self.ordering)}


def descending_order(field: CoefficientField, tiebreak: CoefficientField | None = None) -> tuple[int, ...]:
    """Subdomain indices sorted by non-increasing value; ties by ``tiebreak``, then index."""
    def key(m):
        second = -tiebreak[m] if tiebreak is not None else 0.0
        return (-field[m], second, m)

    return tuple(sorted(field.values, key=key))


def ascending_order(field: CoefficientField) -> tuple[int, ...]:
    return tuple(sorted(field.values, key=lambda m: (field[m], m)))


def analyze_subdomains(
    mesh: Mesh, order_by: CoefficientField, tiebreak: CoefficientField | None = None
) -> SubdomainInfo:
    """Floating subdomains (no boundary facet) and the descending ordering."""
    _, owners = boundary_facets(mesh.cells, return_cells=True)
    touching = set(np.unique(mesh.cell_subdomain[owners]).tolist())
    present = set(np.unique(mesh.cell_subdomain).tolist())
    floating = frozenset(present - touching)
    return SubdomainInfo(floating, len(floating), descending_order(order_by, tiebreak))


def subdomain_components(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Split every label into facet-connected components.

    Returns ``(component_of_cell, floating)`` where ``floating[c]`` is True
    when component ``c`` has no facet on the boundary.
    """
    pairs = interior_facet_pairs(mesh.cells)
    same = mesh.cell_subdomain[pairs[:, 0]] == mesh.cell_subdomain[pairs[:, 1]]
    p = pairs[same]
    nc = mesh.n_cells
    graph = coo_matrix((np.ones(len(p)), (p[:, 0], p[:, 1])), shape=(nc, nc))
    ncomp, comp = connected_components(graph, directed=False)
    _, owners = boundary_facets(mesh.cells, return_cells=True)
    floating = np.ones(ncomp, dtype=bool)
    floating[np.unique(comp[owners])] = False
    return comp, floating


def floating_component_count(mesh: Mesh) -> int:
    """Number of facet-connected single-label regions not touching the boundary.

    This is the floating-subdomain count when each connected piece of a
    label is treated as its own subdomain (as happens with random labels).
    """
    _, floating = subdomain_components(mesh)
    return int(floating.sum())


def classify_case(omega: CoefficientField, rho: CoefficientField) -> str:
    """``"C1"`` when some common non-increasing ordering exists, else ``"C2"``."""
    keys = sorted(set(omega.values) | set(rho.values))
    for i in keys:
        for j in keys:
            if omega[i] > omega[j] and rho[i] < rho[j]:
                return "C2"
    return "C1"


def interpolation_order_field(omega: CoefficientField, rho: CoefficientField) -> CoefficientField:
    """Coefficient whose descending order drives the interpolation's element choice.

    Consistent orderings use omega (with rho breaking ties). Otherwise the
    field with the larger jump ratio is used; a partly-zero rho counts as an
    infinite jump.
    """
    if classify_case(omega, rho) == "C1":
        return omega
    rvals = np.array(rho.as_list())
    j_rho = np.inf if np.any(rvals == 0) else jump_ratio(rho)
    return rho if jump_ratio(omega) <= j_rho else omega

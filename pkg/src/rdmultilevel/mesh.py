"""Structured simplicial meshes of the unit square/cube and their uniform refinement.

Two benchmark geometries are provided:

* ``build_cube_mesh`` -- the unit cube split into ``n**3`` sub-cubes, each cut
  into 6 Kuhn tetrahedra, with lattice-aligned box inclusions forming
  subdomain 2;
* ``build_square_mesh`` -- the unit square split into ``2 n**2`` triangles,
  each coarse triangle assigned at random to subdomain 1 or 2.

``refine_uniform`` bisects every edge (4 children per triangle, 8 per
tetrahedron). New vertices are appended after the parent vertices, so the
level-k vertex set is a prefix of the level-(k+1) vertex set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GeometryError, MeshError

DEFAULT_INCLUSIONS = (
    ((0.25, 0.25, 0.25), (0.5, 0.5, 0.5)),
    ((0.5, 0.5, 0.5), (0.75, 0.75, 0.75)),
)

_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class Mesh:
    """Conforming simplicial mesh with subdomain labels.

    Attributes
    ----------
    dim : int
        Spatial dimension (2 or 3).
    vertices : ndarray, shape (nv, dim)
    cells : ndarray, shape (nc, dim + 1)
        Vertex indices, positively oriented.
    cell_subdomain : ndarray, shape (nc,)
        Subdomain index of every cell (1-based).
    vertex_is_dirichlet : ndarray of bool, shape (nv,)
    level : int
    h : float
        Largest edge length.
    parent_cell : ndarray or None
        For refined meshes, index of the parent cell of every cell.
    edge_parents : ndarray or None
        For refined meshes, the two parent-mesh endpoints of every vertex
        created by edge bisection (rows align with vertices
        ``n_parent_vertices:``).
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    cell_subdomain: np.ndarray
    vertex_is_dirichlet: np.ndarray
    level: int = 0
    h: float = field(default=0.0)
    parent_cell: np.ndarray | None = None
    edge_parents: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_parent_vertices(self) -> int:
        if self.edge_parents is None:
            return 0
        return self.n_vertices - self.edge_parents.shape[0]

    @property
    def free_vertices(self) -> np.ndarray:
        """Indices of non-Dirichlet vertices, ascending."""
        return np.flatnonzero(~self.vertex_is_dirichlet)

    @property
    def subdomains(self) -> np.ndarray:
        return np.unique(self.cell_subdomain)

    def volumes(self) -> np.ndarray:
        return cell_volumes(self.vertices, self.cells)

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)


@dataclass(frozen=True)
class MeshHierarchy:
    """Nested meshes ``levels[0] (coarsest) ... levels[L] (finest)``."""

    levels: tuple[Mesh, ...]
    gamma: float = 0.5

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def finest(self) -> Mesh:
        return self.levels[-1]

    def __getitem__(self, k: int) -> Mesh:
        return self.levels[k]

    def __len__(self) -> int:
        return len(self.levels)

    def ancestors(self, k: int) -> np.ndarray:
        """Level-k ancestor cell of every finest-level cell."""
        anc = np.arange(self.finest.n_cells)
        for mesh in reversed(self.levels[k + 1:]):
            anc = mesh.parent_cell[anc]
        return anc


def signed_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    d = vertices.shape[1]
    p = vertices[cells]
    jac = p[:, 1:, :] - p[:, :1, :]
    fact = 2.0 if d == 2 else 6.0
    return np.linalg.det(jac) / fact


def cell_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    return np.abs(signed_volumes(vertices, cells))


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    vol = signed_volumes(vertices, cells)
    if np.any(np.abs(vol) <= 1e-14 * np.max(np.abs(vol), initial=1.0)):
        raise GeometryError("degenerate cell encountered")
    cells = cells.copy()
    neg = vol < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1], cells[neg, 0].copy()
    return cells


def _local_edges(dim: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(dim + 1), 2))


def max_edge_length(vertices: np.ndarray, cells: np.ndarray) -> float:
    best = 0.0
    for a, b in _local_edges(vertices.shape[1]):
        diff = vertices[cells[:, a]] - vertices[cells[:, b]]
        best = max(best, float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff)))))
    return best


def boundary_facets(cells: np.ndarray, return_cells: bool = False):
    """Facets (sorted vertex tuples) that belong to exactly one cell.

    With ``return_cells=True`` also return the index of the owning cell.
    """
    nc, nloc = cells.shape
    facets = np.concatenate(
        [np.delete(cells, i, axis=1) for i in range(nloc)], axis=0
    )
    facets.sort(axis=1)
    uniq, first, counts = np.unique(facets, axis=0, return_index=True, return_counts=True)
    on_bdry = counts == 1
    if return_cells:
        return uniq[on_bdry], first[on_bdry] % nc
    return uniq[on_bdry]


def interior_facet_pairs(cells: np.ndarray) -> np.ndarray:
    """Pairs of cell indices sharing a facet, shape (n_interior_facets, 2)."""
    nc, nloc = cells.shape
    facets = np.concatenate(
        [np.delete(cells, i, axis=1) for i in range(nloc)], axis=0
    )
    facets.sort(axis=1)
    owner = np.tile(np.arange(nc), nloc)
    order = np.lexsort(facets.T[::-1])
    fs = facets[order]
    same = np.all(fs[1:] == fs[:-1], axis=1)
    idx = np.flatnonzero(same)
    return np.stack([owner[order[idx]], owner[order[idx + 1]]], axis=1)


def _boundary_vertex_flags(n_vertices: int, cells: np.ndarray) -> np.ndarray:
    flags = np.zeros(n_vertices, dtype=bool)
    flags[boundary_facets(cells).ravel()] = True
    return flags


def _check_cells_per_edge(n: int) -> None:
    if int(n) != n or n < 2:
        raise MeshError(f"cells_per_edge must be an integer >= 2, got {n!r}")


def build_cube_mesh(
    cells_per_edge: int,
    inclusion_boxes: Sequence[tuple[Sequence[float], Sequence[float]]] | None = DEFAULT_INCLUSIONS,
) -> Mesh:
    """Kuhn tetrahedral mesh of the unit cube.

    Cells whose barycenter lies in any of ``inclusion_boxes`` (given as
    ``(lower_corner, upper_corner)`` pairs) are labelled 2, all others 1.
    Every boundary vertex is Dirichlet.
    """
    n = cells_per_edge
    _check_cells_per_edge(n)
    boxes = [] if inclusion_boxes is None else [
        (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)) for lo, hi in inclusion_boxes
    ]
    for lo, hi in boxes:
        for c in np.concatenate([lo, hi]):
            if abs(c * n - round(c * n)) > _LATTICE_TOL or not 0.0 <= c <= 1.0:
                raise MeshError(f"inclusion box {lo.tolist()}-{hi.tolist()} is not aligned with the {n}-lattice")
        if np.any(hi <= lo):
            raise MeshError(f"inclusion box {lo.tolist()}-{hi.tolist()} is empty")

    m = n + 1
    # vertex id = i + m*j + m*m*k
    coords = np.stack(
        [np.tile(np.arange(m), m * m), np.tile(np.repeat(np.arange(m), m), m), np.repeat(np.arange(m), m * m)],
        axis=1,
    ) / n

    ci, cj, ck = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    corner = np.stack([ci.ravel(), cj.ravel(), ck.ravel()], axis=1)
    stride = np.array([1, m, m * m])
    cells = []
    for perm in itertools.permutations(range(3)):
        path = [corner.copy()]
        for axis in perm:
            nxt = path[-1].copy()
            nxt[:, axis] += 1
            path.append(nxt)
        cells.append(np.stack([p @ stride for p in path], axis=1))
    # order cells by sub-cube, then permutation
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    cells = _orient(coords, cells)

    bary = coords[cells].mean(axis=1)
    label = np.ones(cells.shape[0], dtype=np.int64)
    for lo, hi in boxes:
        inside = np.all((bary > lo) & (bary < hi), axis=1)
        label[inside] = 2

    on_boundary = np.any((coords <= 0.0) | (coords >= 1.0), axis=1)
    return Mesh(
        dim=3,
        vertices=coords,
        cells=cells,
        cell_subdomain=label,
        vertex_is_dirichlet=on_boundary,
        level=0,
        h=max_edge_length(coords, cells),
    )


def build_square_mesh(cells_per_edge: int, assignment_seed: int = 0) -> Mesh:
    """Triangulated unit square with randomly labelled coarse triangles.

    Each of the ``cells_per_edge**2`` squares is cut along its
    lower-left/upper-right diagonal. Each triangle independently gets label 2
    with probability 1/2 (label 1 otherwise), drawn from
    ``numpy.random.default_rng(assignment_seed)``.
    """
    n = cells_per_edge
    _check_cells_per_edge(n)
    m = n + 1
    coords = np.stack([np.tile(np.arange(m), m), np.repeat(np.arange(m), m)], axis=1) / n
    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (ci + m * cj).ravel()
    v10, v01, v11 = v00 + 1, v00 + m, v00 + m + 1
    cells = np.stack(
        [np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)], axis=1
    ).reshape(-1, 3)
    cells = _orient(coords, cells)

    rng = np.random.default_rng(assignment_seed)
    label = np.where(rng.random(cells.shape[0]) < 0.5, 2, 1).astype(np.int64)

    on_boundary = np.any((coords <= 0.0) | (coords >= 1.0), axis=1)
    return Mesh(
        dim=2,
        vertices=coords,
        cells=cells,
        cell_subdomain=label,
        vertex_is_dirichlet=on_boundary,
        level=0,
        h=max_edge_length(coords, cells),
    )


# Octahedron diagonals of a red-refined tetrahedron, as (diagonal, 4-cycle)
# in terms of local edge-midpoint slots m01, m02, m03, m12, m13, m23 = 0..5.
_OCTA_SPLITS = (
    ((1, 4), (0, 2, 5, 3)),  # m02-m13
    ((2, 3), (0, 1, 5, 4)),  # m03-m12
    ((0, 5), (1, 2, 4, 3)),  # m01-m23
)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: bisect every edge, split each cell into 2**dim children.

    Tetrahedra use the shortest octahedron diagonal; ties are broken in
    favour of the diagonal most aligned with (1, 1, 1), which keeps Kuhn
    tetrahedra Kuhn under refinement.
    """
    d = mesh.dim
    cells = mesh.cells
    nv = mesh.n_vertices
    nc = mesh.n_cells
    ledges = _local_edges(d)

    pairs = np.stack([np.sort(cells[:, [a, b]], axis=1) for a, b in ledges], axis=1)
    keys = pairs[..., 0].astype(np.int64) * nv + pairs[..., 1]
    ukeys, inverse = np.unique(keys.ravel(), return_inverse=True)
    inverse = inverse.reshape(nc, len(ledges))
    edge_parents = np.stack([ukeys // nv, ukeys % nv], axis=1)
    mids = nv + inverse  # (nc, n_local_edges)

    new_vertices = np.concatenate(
        [mesh.vertices, 0.5 * (mesh.vertices[edge_parents[:, 0]] + mesh.vertices[edge_parents[:, 1]])]
    )

    v = [cells[:, i] for i in range(d + 1)]
    if d == 2:
        m01, m02, m12 = mids[:, 0], mids[:, 1], mids[:, 2]
        children = np.stack(
            [
                np.stack([v[0], m01, m02], axis=1),
                np.stack([m01, v[1], m12], axis=1),
                np.stack([m02, m12, v[2]], axis=1),
                np.stack([m01, m12, m02], axis=1),
            ],
            axis=1,
        )
    else:
        m01, m02, m03, m12, m13, m23 = (mids[:, i] for i in range(6))
        corners = [
            np.stack([v[0], m01, m02, m03], axis=1),
            np.stack([m01, v[1], m12, m13], axis=1),
            np.stack([m02, m12, v[2], m23], axis=1),
            np.stack([m03, m13, m23, v[3]], axis=1),
        ]
        x = new_vertices
        len2 = np.empty((nc, 3))
        align = np.empty((nc, 3))
        for s, ((a, b), _) in enumerate(_OCTA_SPLITS):
            diff = x[mids[:, b]] - x[mids[:, a]]
            len2[:, s] = np.einsum("ij,ij->i", diff, diff)
            align[:, s] = np.abs(diff.sum(axis=1))
        shortest = len2 <= len2.min(axis=1, keepdims=True) * (1.0 + 1e-10)
        choice = np.argmax(np.where(shortest, align, -np.inf), axis=1)
        inner = np.empty((nc, 4, 4), dtype=cells.dtype)
        for s, ((a, b), cyc) in enumerate(_OCTA_SPLITS):
            sel = choice == s
            if not np.any(sel):
                continue
            ms = mids[sel]
            for t in range(4):
                c0, c1 = cyc[t], cyc[(t + 1) % 4]
                inner[sel, t] = np.stack([ms[:, a], ms[:, b], ms[:, c0], ms[:, c1]], axis=1)
        children = np.concatenate([np.stack(corners, axis=1), inner], axis=1)

    nchild = children.shape[1]
    children = _orient(new_vertices, children.reshape(-1, d + 1))

    bedges = _boundary_edge_keys(cells, nv)
    new_dirichlet = np.isin(ukeys, bedges)

    return Mesh(
        dim=d,
        vertices=new_vertices,
        cells=children,
        cell_subdomain=np.repeat(mesh.cell_subdomain, nchild),
        vertex_is_dirichlet=np.concatenate([mesh.vertex_is_dirichlet, new_dirichlet]),
        level=mesh.level + 1,
        h=max_edge_length(new_vertices, children),
        parent_cell=np.repeat(np.arange(nc), nchild),
        edge_parents=edge_parents,
    )


def _boundary_edge_keys(cells: np.ndarray, nv: int) -> np.ndarray:
    facets = boundary_facets(cells)
    nloc = facets.shape[1]
    keys = [
        facets[:, a].astype(np.int64) * nv + facets[:, b]
        for a, b in itertools.combinations(range(nloc), 2)
    ]
    return np.unique(np.concatenate(keys))


def build_hierarchy(coarse: Mesh, L: int) -> MeshHierarchy:
    """Refine ``coarse`` ``L`` times."""
    if L < 0:
        raise MeshError(f"L must be >= 0, got {L}")
    levels = [coarse]
    for _ in range(L):
        levels.append(refine_uniform(levels[-1]))
    return MeshHierarchy(tuple(levels), gamma=0.5)


def on_domain_boundary(mesh: Mesh) -> np.ndarray:
    """Vertices that lie on a boundary facet of the mesh."""
    return _boundary_vertex_flags(mesh.n_vertices, mesh.cells)


def dump_ascii(mesh: Mesh) -> str:
    """Vertex table followed by cell table (with subdomain column)."""
    lines = [f"# vertices {mesh.n_vertices} dim {mesh.dim}"]
    for x, bc in zip(mesh.vertices, mesh.vertex_is_dirichlet):
        lines.append(" ".join(f"{c:.17g}" for c in x) + f" {int(bc)}")
    lines.append(f"# cells {mesh.n_cells}")
    for c, s in zip(mesh.cells, mesh.cell_subdomain):
        lines.append(" ".join(str(int(i)) for i in c) + f" {int(s)}")
    return "\n".join(lines) + "\n"

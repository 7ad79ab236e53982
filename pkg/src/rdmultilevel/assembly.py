"""Linear Lagrange finite element assembly for -div(omega grad u) + rho u = f.

Dirichlet vertices are eliminated: assembled operators and load vectors are
indexed by the free (non-Dirichlet) vertices of the mesh in ascending order.
Operators are ``scipy.sparse.csr_matrix``.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coefficients import CoefficientField
from .errors import GeometryError
from .mesh import Mesh

_CHUNK = 1 << 18


def _as_batch(cell: np.ndarray) -> np.ndarray:
    cell = np.asarray(cell, dtype=float)
    return cell[None] if cell.ndim == 2 else cell


def barycentric_gradients(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the barycentric coordinates and cell volumes.

    Parameters
    ----------
    points : ndarray, shape (nc, d + 1, d)
        Vertex coordinates of each simplex.

    Returns
    -------
    grads : ndarray, shape (nc, d + 1, d)
    vol : ndarray, shape (nc,)
    """
    d = points.shape[-1]
    edges = points[:, 1:, :] - points[:, :1, :]
    det = np.linalg.det(edges)
    vol = np.abs(det) / (2.0 if d == 2 else 6.0)
    scale = np.max(np.abs(edges), axis=(1, 2)) ** d
    if np.any(np.abs(det) <= 1e-13 * scale):
        raise GeometryError("degenerate simplex (zero volume)")
    inv = np.linalg.inv(edges)  # columns are grad(lambda_1..lambda_d)
    g = np.transpose(inv, (0, 2, 1))
    grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
    return grads, vol


def local_mass_pattern(d: int) -> np.ndarray:
    """``int_T lambda_i lambda_j / |T|`` on a d-simplex."""
    return (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))


def element_stiffness(cell: np.ndarray, omega_cell: float) -> np.ndarray:
    """``omega |T| grad(lambda_i) . grad(lambda_j)`` for one simplex (rows = vertices)."""
    grads, vol = barycentric_gradients(_as_batch(cell))
    return omega_cell * vol[0] * grads[0] @ grads[0].T


def element_mass(cell: np.ndarray, rho_cell: float) -> np.ndarray:
    """``rho |T| (1 + delta_ij) / ((d+1)(d+2))`` for one simplex."""
    pts = _as_batch(cell)
    _, vol = barycentric_gradients(pts)
    return rho_cell * vol[0] * local_mass_pattern(pts.shape[-1])


def free_index_map(mesh: Mesh) -> np.ndarray:
    """Full vertex index -> free index (-1 for Dirichlet vertices)."""
    idx = -np.ones(mesh.n_vertices, dtype=np.int64)
    free = mesh.free_vertices
    idx[free] = np.arange(free.size)
    return idx


def assemble_weighted(
    mesh: Mesh,
    stiff_per_cell: np.ndarray | None,
    mass_per_cell: np.ndarray | None,
    free_only: bool = True,
) -> sp.csr_matrix:
    """Sum of element stiffness/mass contributions with per-cell weights.

    Either weight array may be None to skip that term. Cells are processed
    in ascending index order, in chunks, so the result is bit-reproducible and exactly symmetric.
    """
    d = mesh.dim
    nloc = d + 1
    if free_only:
        remap = free_index_map(mesh)
        n = int(mesh.free_vertices.size)
    else:
        remap = np.arange(mesh.n_vertices)
        n = mesh.n_vertices
    pattern = local_mass_pattern(d)
    total = sp.csr_matrix((n, n))
    ii, jj = np.meshgrid(np.arange(nloc), np.arange(nloc), indexing="ij")
    for start in range(0, mesh.n_cells, _CHUNK):
        cells = mesh.cells[start:start + _CHUNK]
        grads, vol = barycentric_gradients(mesh.vertices[cells])
        local = np.zeros((cells.shape[0], nloc, nloc))
        if stiff_per_cell is not None:
            w = stiff_per_cell[start:start + _CHUNK] * vol
            local += w[:, None, None] * np.einsum("cik,cjk->cij", grads, grads)
        if mass_per_cell is not None:
            w = mass_per_cell[start:start + _CHUNK] * vol
            local += w[:, None, None] * pattern[None]
        gi = remap[cells]
        rows = gi[:, ii].ravel()
        cols = gi[:, jj].ravel()
        vals = local.ravel()
        keep = (rows >= 0) & (cols >= 0)
        chunk = sp.coo_matrix(
            (vals[keep], (rows[keep].astype(np.int32), cols[keep].astype(np.int32))), shape=(n, n)
        ).tocsr()
        total = total + chunk
    # duplicate summation order differs between (i, j) and (j, i); average for exact symmetry
    total = ((total + total.T) * 0.5).tocsr()
    total.sum_duplicates()
    total.sort_indices()
    return total


def assemble_operator(mesh: Mesh, omega: CoefficientField, rho: CoefficientField) -> sp.csr_matrix:
    """Reduced stiffness-plus-mass matrix on the free vertices."""
    w = omega.per_cell(mesh.cell_subdomain)
    r = rho.per_cell(mesh.cell_subdomain)
    return assemble_weighted(mesh, w, r if np.any(r) else None)


def assemble_mass(mesh: Mesh, tau: CoefficientField | None = None, free_only: bool = True) -> sp.csr_matrix:
    """(tau-weighted) mass matrix; ``tau=None`` means unit weight."""
    w = np.ones(mesh.n_cells) if tau is None else tau.per_cell(mesh.cell_subdomain)
    return assemble_weighted(mesh, None, w, free_only)


def assemble_stiffness(mesh: Mesh, tau: CoefficientField | None = None, free_only: bool = True) -> sp.csr_matrix:
    """(tau-weighted) Laplace stiffness matrix."""
    w = np.ones(mesh.n_cells) if tau is None else tau.per_cell(mesh.cell_subdomain)
    return assemble_weighted(mesh, w, None, free_only)


def assemble_load(mesh: Mesh, f_const: float = 1.0, free_only: bool = True) -> np.ndarray:
    """Load vector of a constant source: ``f |T| / (d+1)`` summed per vertex."""
    vol = mesh.volumes()
    share = np.repeat(f_const * vol / (mesh.dim + 1), mesh.dim + 1)
    b = np.bincount(mesh.cells.ravel(), weights=share, minlength=mesh.n_vertices)
    return b[mesh.free_vertices] if free_only else b


def export_matrix_market(path, A: sp.spmatrix, comment: str = "") -> None:
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment, field="real", symmetry="symmetric")

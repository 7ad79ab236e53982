"""Transfer operators, level operators, smoothers, BPX and V(1,1) multigrid.

All vectors live on the free vertices of a given level. Restriction of
residuals is the transpose of the linear-interpolation prolongation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _kernels
from .assembly import assemble_operator, free_index_map
from .coefficients import CoefficientField
from .errors import CoarseSolveError, DefinitenessError, StructureError
from .mesh import MeshHierarchy

PRECONDITIONERS = ("none", "jacobi", "sgs", "bpx", "mg")


def build_prolongation(hierarchy: MeshHierarchy, k: int, free_only: bool = True) -> sp.csr_matrix:
    """Linear interpolation from level ``k-1`` to level ``k``.

    Coarse vertices are copied; each edge midpoint takes the average of its
    two endpoints. Dirichlet rows/columns are dropped when ``free_only``.
    """
    if not 1 <= k <= hierarchy.L:
        raise StructureError(f"prolongation level must be in [1, {hierarchy.L}], got {k}")
    coarse, fine = hierarchy[k - 1], hierarchy[k]
    nc = coarse.n_vertices
    if (
        fine.edge_parents is None
        or fine.n_parent_vertices != nc
        or not np.array_equal(fine.vertices[:nc], coarse.vertices)
    ):
        raise StructureError(f"levels {k - 1} and {k} are not nested")
    ne = fine.edge_parents.shape[0]
    rows = np.concatenate([np.arange(nc), np.repeat(np.arange(nc, nc + ne), 2)])
    cols = np.concatenate([np.arange(nc), fine.edge_parents.ravel()])
    vals = np.concatenate([np.ones(nc), np.full(2 * ne, 0.5)])
    P = sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_vertices, nc))
    if free_only:
        P = P[fine.free_vertices][:, coarse.free_vertices]
    P = P.tocsr()
    P.sort_indices()
    return P


def galerkin_coarsen(A_fine: sp.spmatrix, P: sp.spmatrix) -> sp.csr_matrix:
    """``P^T A P``, symmetrized to remove rounding asymmetry."""
    if A_fine.shape[0] != P.shape[0]:
        raise StructureError(f"operator {A_fine.shape} incompatible with prolongation {P.shape}")
    C = (P.T @ (A_fine @ P)).tocsr()
    C = ((C + C.T) * 0.5).tocsr()
    C.sum_duplicates()
    C.sort_indices()
    return C


@dataclass
class TransferOps:
    """Per-level prolongations ``P[k]`` (level k-1 -> k); ``P[0]`` is unused."""

    P: list
    sizes: list

    @property
    def L(self) -> int:
        return len(self.P) - 1

    def composite(self, k: int) -> sp.csr_matrix:
        """``P_L ... P_{k+1}``: level-k coefficients to finest coefficients."""
        M = sp.identity(self.sizes[k], format="csr")
        for j in range(k + 1, self.L + 1):
            M = (self.P[j] @ M).tocsr()
        return M

    def prolong(self, x: np.ndarray, k: int) -> np.ndarray:
        for j in range(k + 1, self.L + 1):
            x = self.P[j] @ x
        return x

    def restrict(self, r: np.ndarray, k: int) -> np.ndarray:
        for j in range(self.L, k, -1):
            r = self.P[j].T @ r
        return r


@dataclass
class _Level:
    A: sp.csr_matrix
    diag: np.ndarray = field(init=False)

    def __post_init__(self):
        self.A = self.A.tocsr()
        self.A.sort_indices()
        self.diag = self.A.diagonal().copy()
        if np.any(self.diag <= 0):
            raise DefinitenessError("operator has a non-positive diagonal entry")

    @property
    def csr(self):
        A = self.A
        return A.indptr, A.indices, A.data, self.diag


@dataclass
class LevelStack:
    """Operators ``A[0..L]`` (Galerkin), their smoother data and the coarse factorization."""

    levels: list
    transfers: TransferOps
    coarse_factor: tuple

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def A(self) -> list:
        return [lvl.A for lvl in self.levels]

    def coarse_solve(self, r: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.coarse_factor, r)


def build_level_stack(A_fine: sp.spmatrix, prolongations: Sequence[sp.spmatrix]) -> LevelStack:
    """Galerkin hierarchy from the finest operator and ``P_1..P_L``."""
    P = [None] + list(prolongations)
    ops = [sp.csr_matrix(A_fine)]
    for k in range(len(P) - 1, 0, -1):
        ops.append(galerkin_coarsen(ops[-1], P[k]))
    ops.reverse()
    levels = [_Level(A) for A in ops]
    A0 = ops[0].toarray()
    try:
        factor = scipy.linalg.cho_factor(A0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise CoarseSolveError(f"coarse operator is not SPD: {exc}") from None
    return LevelStack(levels, TransferOps(P, [A.shape[0] for A in ops]), factor)


def build_stack_for(hierarchy: MeshHierarchy, omega: CoefficientField, rho: CoefficientField) -> LevelStack:
    """Assemble the finest operator and coarsen it through the hierarchy."""
    A = assemble_operator(hierarchy.finest, omega, rho)
    P = [build_prolongation(hierarchy, k) for k in range(1, hierarchy.L + 1)]
    return build_level_stack(A, P)


def smoother_apply(kind: str, A: sp.spmatrix, r: np.ndarray) -> np.ndarray:
    """Jacobi ``D^{-1} r`` or symmetric Gauss-Seidel ``(L+D)^{-T} D (L+D)^{-1} r``."""
    lvl = _Level(sp.csr_matrix(A))
    r = np.asarray(r, dtype=float)
    if kind == "jacobi":
        return r / lvl.diag
    if kind == "sgs":
        return _kernels.sgs_apply(*lvl.csr, r)
    raise ValueError(f"unknown smoother {kind!r}")


def bpx_apply(stack: LevelStack, r: np.ndarray) -> np.ndarray:
    """Additive multilevel preconditioner.

    ``A_0^{-1}`` on the coarsest level plus one symmetric Gauss-Seidel
    application on each finer level, with residuals restricted by ``P^T``
    and corrections prolongated back.
    """
    T = stack.transfers
    if T.L != stack.L or r.shape[0] != stack.levels[-1].A.shape[0]:
        raise StructureError("level stack, transfers and residual do not match")
    res = [None] * (stack.L + 1)
    res[stack.L] = np.asarray(r, dtype=float)
    for k in range(stack.L, 0, -1):
        res[k - 1] = T.P[k].T @ res[k]
    y = stack.coarse_solve(res[0])
    for k in range(1, stack.L + 1):
        y = T.P[k] @ y + _kernels.sgs_apply(*stack.levels[k].csr, res[k])
    return y


def mg_vcycle_apply(stack: LevelStack, g: np.ndarray) -> np.ndarray:
    """V(1,1) cycle: forward GS pre-smoothing, backward GS post-smoothing, exact coarse solve."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != stack.levels[-1].A.shape[0]:
        raise StructureError("residual does not match the finest level")
    return _vcycle(stack, stack.L, g)


def _vcycle(stack: LevelStack, k: int, g: np.ndarray) -> np.ndarray:
    if k == 0:
        return stack.coarse_solve(g)
    lvl = stack.levels[k]
    P = stack.transfers.P[k]
    w = np.zeros_like(g)
    _kernels.gs_forward(*lvl.csr, g, w)
    w += P @ _vcycle(stack, k - 1, P.T @ (g - lvl.A @ w))
    _kernels.gs_backward(*lvl.csr, g, w)
    return w


class Preconditioner:
    """Symmetric positive definite map ``r -> B r``."""

    kind = "none"

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return np.array(r, dtype=float, copy=True)

    def as_dense(self, n: int) -> np.ndarray:
        """Materialize ``B`` column by column (for small ``n`` only)."""
        B = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            B[:, j] = self(e)
            e[j] = 0.0
        return B


class JacobiPreconditioner(Preconditioner):
    kind = "jacobi"

    def __init__(self, A: sp.spmatrix):
        self.inv_diag = 1.0 / _Level(sp.csr_matrix(A)).diag

    def __call__(self, r):
        return self.inv_diag * r


class SGSPreconditioner(Preconditioner):
    kind = "sgs"

    def __init__(self, A: sp.spmatrix):
        self.level = _Level(sp.csr_matrix(A))

    def __call__(self, r):
        return _kernels.sgs_apply(*self.level.csr, np.asarray(r, dtype=float))


class BPXPreconditioner(Preconditioner):
    kind = "bpx"

    def __init__(self, stack: LevelStack):
        self.stack = stack

    def __call__(self, r):
        return bpx_apply(self.stack, r)


class MGPreconditioner(Preconditioner):
    kind = "mg"

    def __init__(self, stack: LevelStack):
        self.stack = stack

    def __call__(self, r):
        return mg_vcycle_apply(self.stack, r)


class FunctionPreconditioner(Preconditioner):
    """Wrap an arbitrary callable (e.g. an exact solve) as a preconditioner."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], kind: str = "custom"):
        self.fn = fn
        self.kind = kind

    def __call__(self, r):
        return self.fn(r)


def make_preconditioner(kind: str, A: sp.spmatrix, stack: LevelStack | None = None) -> Preconditioner:
    if kind in ("none", "identity"):
        return Preconditioner()
    if kind == "jacobi":
        return JacobiPreconditioner(A)
    if kind in ("sgs", "gs"):
        return SGSPreconditioner(A)
    if kind in ("bpx", "mg"):
        if stack is None:
            raise StructureError(f"preconditioner {kind!r} needs a level stack")
        return BPXPreconditioner(stack) if kind == "bpx" else MGPreconditioner(stack)
    raise ValueError(f"unknown preconditioner {kind!r}; choose from {PRECONDITIONERS}")


def full_vector(hierarchy: MeshHierarchy, k: int, x_free: np.ndarray) -> np.ndarray:
    """Scatter a free-vertex vector of level k into a full vertex vector (zeros on the boundary)."""
    mesh = hierarchy[k]
    out = np.zeros(mesh.n_vertices)
    out[mesh.free_vertices] = x_free
    return out


__all__ = [
    "PRECONDITIONERS",
    "BPXPreconditioner",
    "FunctionPreconditioner",
    "JacobiPreconditioner",
    "LevelStack",
    "MGPreconditioner",
    "Preconditioner",
    "SGSPreconditioner",
    "TransferOps",
    "bpx_apply",
    "build_level_stack",
    "build_prolongation",
    "build_stack_for",
    "free_index_map",
    "full_vector",
    "galerkin_coarsen",
    "make_preconditioner",
    "mg_vcycle_apply",
    "smoother_apply",
]

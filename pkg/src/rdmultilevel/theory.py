"""Measurable versions of the multilevel analysis.

Dual-basis quasi-interpolation with subdomain-ordered element choice,
weighted L2 projections, stable multilevel decompositions and the
strengthened Cauchy-Schwarz inequality. Functions act on finest-level
free-vertex coefficient vectors unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import assemble_mass, assemble_stiffness, barycentric_gradients, free_index_map, local_mass_pattern
from .coefficients import CoefficientField, SubdomainInfo, ascending_order, descending_order
from .errors import ConfigurationError, DomainError, StructureError
from .krylov import pcg
from .mesh import Mesh, MeshHierarchy
from .problems import prolongations


@dataclass
class DualBasisCache:
    """Associated elements ``T_x`` and inverse element mass matrices of one mesh.

    ``alpha(T) = M_T^{-1} = scale[T] * (I - 11^T / (d + 2))`` so the dual
    basis of ``T`` is ``mu_i = scale[T] * (lambda_i - 1 / (d + 2))``.
    """

    mesh: Mesh
    element_of_vertex: np.ndarray
    scale: np.ndarray

    def alpha(self, cell: int) -> np.ndarray:
        d = self.mesh.dim
        return self.scale[cell] * (np.eye(d + 1) - 1.0 / (d + 2))

    def mu_squared(self, cell: int) -> float:
        """``int_T mu_i^2 = alpha_ii`` (the same for every local vertex)."""
        d = self.mesh.dim
        return float(self.scale[cell] * (d + 1) / (d + 2))


def _cell_rank(mesh: Mesh, ordering: SubdomainInfo) -> np.ndarray:
    rank = ordering.rank()
    missing = sorted(set(np.unique(mesh.cell_subdomain).tolist()) - set(rank))
    if missing:
        raise ConfigurationError(f"ordering lacks subdomain(s) {missing}")
    lut = np.zeros(int(mesh.cell_subdomain.max()) + 1, dtype=np.int64)
    for m, r in rank.items():
        if m < lut.size:
            lut[m] = r
    return lut[mesh.cell_subdomain]


def associated_elements(mesh: Mesh, ordering: SubdomainInfo) -> np.ndarray:
    """``T_x`` for every vertex: a containing cell of minimal subdomain rank, lowest index on ties."""
    nc = mesh.n_cells
    key = _cell_rank(mesh, ordering) * nc + np.arange(nc)
    best = np.full(mesh.n_vertices, np.iinfo(np.int64).max)
    np.minimum.at(best, mesh.cells.ravel(), np.repeat(key, mesh.dim + 1))
    return best % nc


def build_dual_basis(mesh: Mesh, ordering: SubdomainInfo) -> DualBasisCache:
    d = mesh.dim
    scale = (d + 1) * (d + 2) / mesh.volumes()
    return DualBasisCache(mesh, associated_elements(mesh, ordering), scale)


def biorthogonality_error(mesh: Mesh) -> float:
    """``max_T |int_T lambda_j mu_i - delta_ij|`` evaluated with exact element matrices."""
    d = mesh.dim
    vol = mesh.volumes()
    M = vol[:, None, None] * local_mass_pattern(d)[None]
    alpha = ((d + 1) * (d + 2) / vol)[:, None, None] * (np.eye(d + 1) - 1.0 / (d + 2))[None]
    return float(np.max(np.abs(M @ alpha - np.eye(d + 1))))


def composite_prolongation(hierarchy: MeshHierarchy, k: int, to: int | None = None) -> sp.csr_matrix:
    """Free-vertex interpolation from level ``k`` to level ``to`` (finest by default)."""
    to = hierarchy.L if to is None else to
    _check_level(hierarchy, k)
    P = prolongations(hierarchy)
    M = sp.identity(hierarchy[k].free_vertices.size, format="csr")
    for j in range(k + 1, to + 1):
        M = (P[j - 1] @ M).tocsr()
    return M


def _check_level(hierarchy: MeshHierarchy, k: int) -> None:
    if not 0 <= k <= hierarchy.L:
        raise StructureError(f"level {k} outside [0, {hierarchy.L}]")


def dual_interpolation_matrix(hierarchy: MeshHierarchy, k: int, ordering: SubdomainInfo) -> sp.csr_matrix:
    """Sparse matrix of ``Pi_k``: finest free coefficients -> level-k free coefficients.

    Row ``x`` holds ``int_{T_x} phi_a mu_x`` for the finest basis functions
    ``phi_a``; both factors are linear on every finest cell inside ``T_x``,
    so the integrals are exact element mass products.
    """
    _check_level(hierarchy, k)
    coarse, fine = hierarchy[k], hierarchy.finest
    d = fine.dim
    dual = build_dual_basis(coarse, ordering)
    anc = hierarchy.ancestors(k)
    cpts = coarse.vertices[coarse.cells]
    grads, _ = barycentric_gradients(cpts)
    fpts = fine.vertices[fine.cells]
    T = anc
    # barycentric coordinates of every fine vertex w.r.t. its ancestor cell
    rel = fpts - cpts[T, :1, :]
    lam = np.einsum("cbk,cjk->cbj", rel, grads[T])
    lam[:, :, 0] += 1.0
    mu = dual.scale[T][:, None, None] * (lam - 1.0 / (d + 2))
    Mc = fine.volumes()[:, None, None] * local_mass_pattern(d)[None]
    w = np.einsum("cbi,cba->cia", mu, Mc)  # int_c mu_i phi_a

    rmap = free_index_map(coarse)
    cmap = free_index_map(fine)
    rows, cols, vals = [], [], []
    for i in range(d + 1):
        x = coarse.cells[T, i]
        own = (dual.element_of_vertex[x] == T) & (rmap[x] >= 0)
        r = np.repeat(rmap[x[own]], d + 1)
        c = cmap[fine.cells[own]].ravel()
        v = w[own, i, :].ravel()
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])
    shape = (coarse.free_vertices.size, fine.free_vertices.size)
    Pi = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
    Pi.sum_duplicates()
    return Pi


def dual_interpolate(hierarchy: MeshHierarchy, k: int, v: np.ndarray, ordering: SubdomainInfo) -> np.ndarray:
    """Level-k free coefficients of ``Pi_k v`` (zero at Dirichlet vertices by construction)."""
    return dual_interpolation_matrix(hierarchy, k, ordering) @ np.asarray(v, dtype=float)


def weighted_l2_project(
    hierarchy: MeshHierarchy, k: int, v: np.ndarray, tau: CoefficientField, tol: float = 1e-13
) -> np.ndarray:
    """``tau``-weighted L2 projection of a finest-level function onto ``V_k``.

    Basis functions supported entirely where ``tau = 0`` are unconstrained
    by the weighted norm; their coefficients are set to zero.
    """
    _check_level(hierarchy, k)
    if not any(val > 0 for val in tau.values.values()):
        raise DomainError("weighted mass matrix is singular: tau vanishes everywhere")
    ML = assemble_mass(hierarchy.finest, tau)
    C = composite_prolongation(hierarchy, k)
    Mk = (C.T @ ML @ C).tocsr()
    rhs = C.T @ (ML @ np.asarray(v, dtype=float))
    q = np.zeros(Mk.shape[0])
    active = np.flatnonzero(Mk.diagonal() > 0)
    Ma = Mk[active][:, active]
    inv_d = 1.0 / Ma.diagonal()
    q[active] = pcg(Ma, lambda r: inv_d * r, rhs[active], tol=tol, max_iter=10 * max(active.size, 10)).solution
    return q


@dataclass
class DecompositionReport:
    pieces: list
    h1_coarse: float
    h1_scaled: list
    l2_rho: list
    h1_norm: float
    l2_norm: float
    energy: float
    reconstruction_error: float
    ratios: dict = field(default_factory=dict)


def _ratio(num: float, den: float) -> float:
    if num == 0.0:
        return 0.0
    return num / den if den > 0 else np.inf


def interpolation_matrices(hierarchy: MeshHierarchy, ordering: SubdomainInfo) -> list[sp.csr_matrix]:
    """``C_k Pi_k`` for every level: finest coefficients -> finest coefficients of ``Pi_k v``."""
    return [
        (composite_prolongation(hierarchy, k) @ dual_interpolation_matrix(hierarchy, k, ordering)).tocsr()
        for k in range(hierarchy.L + 1)
    ]


def measure_decomposition(
    hierarchy: MeshHierarchy,
    omega: CoefficientField,
    rho: CoefficientField,
    ordering: SubdomainInfo,
    v: np.ndarray,
    interp: list | None = None,
) -> DecompositionReport:
    """Energies of ``v_0 = Pi_0 v``, ``v_k = (Pi_k - Pi_{k-1}) v``.

    ``ratios`` holds ``h1`` (``|v_0|_{1,w}^2 + sum h_k^-2 |v_k|_{0,w}^2``
    over ``|v|_{1,w}^2``), ``l2`` (``sum |v_k|_{0,rho}^2`` over
    ``|v|_{0,rho}^2``) and ``energy`` (both sums over ``a(v, v)``).
    """
    fine = hierarchy.finest
    v = np.asarray(v, dtype=float)
    interp = interpolation_matrices(hierarchy, ordering) if interp is None else interp
    K = assemble_stiffness(fine, omega)
    Mw = assemble_mass(fine, omega)
    Mr = assemble_mass(fine, rho)
    proj = [P @ v for P in interp]
    pieces = [proj[0]] + [proj[k] - proj[k - 1] for k in range(1, len(proj))]
    h1_coarse = float(pieces[0] @ (K @ pieces[0]))
    h1_scaled = [float(p @ (Mw @ p)) / hierarchy[k].h ** 2 for k, p in enumerate(pieces) if k > 0]
    l2_rho = [float(p @ (Mr @ p)) for p in pieces]
    h1 = float(v @ (K @ v))
    l2 = float(v @ (Mr @ v))
    err = float(np.max(np.abs(np.sum(pieces, axis=0) - v))) if v.size else 0.0
    rep = DecompositionReport(pieces, h1_coarse, h1_scaled, l2_rho, h1, l2, h1 + l2, err)
    s_h1 = h1_coarse + sum(h1_scaled)
    rep.ratios = {
        "h1": _ratio(s_h1, h1),
        "l2": _ratio(sum(l2_rho), l2),
        "energy": _ratio(s_h1 + sum(l2_rho), h1 + l2),
    }
    return rep


def measure_scs(
    hierarchy: MeshHierarchy, omega: CoefficientField, n_pairs: int = 50, seed: int = 0
) -> np.ndarray:
    """Normalized cross-level energies ``c[j, k]`` for ``j <= k`` (NaN below the diagonal).

    ``c[j, k] = max |int w grad v_k . grad v_j| / (h_k^-1 |v_k|_{0,w} h_j^-1 |v_j|_{0,w})``
    over ``n_pairs`` random pairs with standard normal coefficients.
    """
    if hierarchy.L < 2:
        raise StructureError("strengthened Cauchy-Schwarz needs at least 3 levels")
    rng = np.random.default_rng(seed)
    n_lev = hierarchy.L + 1
    c = np.full((n_lev, n_lev), np.nan)
    for k in range(n_lev):
        mesh = hierarchy[k]
        K = assemble_stiffness(mesh, omega)
        M = assemble_mass(mesh, omega)
        Vk = rng.standard_normal((mesh.free_vertices.size, n_pairs))
        nk = np.sqrt(np.einsum("ij,ij->j", Vk, M @ Vk)) / mesh.h
        KVk = K @ Vk
        for j in range(k + 1):
            Vj = composite_prolongation(hierarchy, j, to=k) @ rng.standard_normal((hierarchy[j].free_vertices.size, n_pairs))
            nj = np.sqrt(np.einsum("ij,ij->j", Vj, M @ Vj)) / hierarchy[j].h
            cross = np.abs(np.einsum("ij,ij->j", KVk, Vj))
            c[j, k] = float(np.max(cross / (nk * nj)))
    return c


def scs_band_ratios(c: np.ndarray) -> np.ndarray:
    """``c[j, k] / c[j, k+1]`` for all off-diagonal ``j < k < L``."""
    n = c.shape[0]
    return np.array([c[j, k] / c[j, k + 1] for j in range(n) for k in range(j + 1, n - 1)])


def scs_decay_exponent(c: np.ndarray) -> float:
    """Least-squares slope of ``-log2 c[j, k]`` against ``k - j`` over off-diagonal entries."""
    n = c.shape[0]
    gaps, vals = [], []
    for j in range(n):
        for k in range(j + 1, n):
            gaps.append(k - j)
            vals.append(-np.log2(c[j, k]))
    return float(np.polyfit(gaps, vals, 1)[0])


def _localized_samples(mesh: Mesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random functions supported on vertices interior to a single subdomain (cycling over subdomains)."""
    free = mesh.free_vertices
    labels = mesh.subdomains
    nv = mesh.n_vertices
    lo = np.full(nv, np.iinfo(np.int64).max)
    hi = np.full(nv, -1)
    lab = np.repeat(mesh.cell_subdomain, mesh.dim + 1)
    np.minimum.at(lo, mesh.cells.ravel(), lab)
    np.maximum.at(hi, mesh.cells.ravel(), lab)
    pure = np.where(lo == hi, lo, -1)[free]
    V = rng.standard_normal((free.size, n))
    for s in range(n):
        V[pure != labels[s % labels.size], s] = 0.0
    return V


def stability_constant(
    hierarchy: MeshHierarchy,
    k: int,
    tau: CoefficientField,
    ordering: SubdomainInfo,
    n_samples: int = 200,
    seed: int = 0,
    exact: bool = False,
) -> float:
    """``sup |Pi_k v|_{0,tau} / |v|_{0,tau}`` over sampled finest-level ``v``.

    Half the samples are global standard normal draws and half are supported
    inside a single subdomain. With ``exact=True`` the supremum over all of
    ``V_h`` is computed from a dense generalized eigenproblem instead.
    """
    Pi = dual_interpolation_matrix(hierarchy, k, ordering)
    ML = assemble_mass(hierarchy.finest, tau)
    Mk = assemble_mass(hierarchy[k], tau)
    if exact:
        G = (Pi.T @ Mk @ Pi).toarray()
        ev = scipy.linalg.eigh(G, ML.toarray(), eigvals_only=True, subset_by_index=[ML.shape[0] - 1] * 2)
        return float(np.sqrt(max(ev[-1], 0.0)))
    rng = np.random.default_rng(seed)
    half = n_samples // 2
    V = np.hstack([
        rng.standard_normal((ML.shape[0], n_samples - half)),
        _localized_samples(hierarchy.finest, half, rng),
    ])
    W = Pi @ V
    num = np.einsum("ij,ij->j", W, Mk @ W)
    den = np.einsum("ij,ij->j", V, ML @ V)
    ok = den > 0
    return float(np.sqrt(np.max(num[ok] / den[ok])))


def ordering_for(field: CoefficientField, adversarial: bool = False) -> SubdomainInfo:
    """Descending (analysis) or ascending (adversarial) ordering by ``field``."""
    order = ascending_order(field) if adversarial else descending_order(field)
    return SubdomainInfo(frozenset(), 0, order)


@dataclass
class Check:
    name: str
    measured: float
    bound: str
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.measured:.4g} ({self.bound})"


JUMPS = (1.0, 1e2, 1e4, 1e6, 1e8)


def verify_suite(hierarchy: MeshHierarchy, k: int = 1, seed: int = 0, exact: bool = True) -> list[Check]:
    """Run the measurable analysis checks on ``hierarchy`` and return one Check per property."""
    rng = np.random.default_rng(seed)
    labels = [int(m) for m in hierarchy[0].subdomains]
    unit = CoefficientField.constant(1.0, labels)
    checks = []

    bio = max(biorthogonality_error(m) for m in hierarchy.levels)
    checks.append(Check("biorthogonality", bio, "<= 1e-12", bio <= 1e-12))

    order = ordering_for(unit)
    idem = 0.0
    for j in range(hierarchy.L + 1):
        u = rng.standard_normal(hierarchy[j].free_vertices.size)
        back = dual_interpolate(hierarchy, j, composite_prolongation(hierarchy, j) @ u, order)
        idem = max(idem, float(np.max(np.abs(back - u)) / np.max(np.abs(u))))
    checks.append(Check("Pi_k idempotent on V_k", idem, "<= 1e-10", idem <= 1e-10))

    def tau_for(J):
        return CoefficientField({m: (J if i == 0 else 1.0) for i, m in enumerate(labels)}, "omega")

    ordered = [stability_constant(hierarchy, k, tau_for(J), ordering_for(tau_for(J)), seed=seed, exact=exact)
               for J in JUMPS]
    flat = max(ordered) / min(ordered)
    checks.append(Check("ordered stability jump-flat (max/min over J)", flat, "< 2", flat < 2.0))

    adv = [stability_constant(hierarchy, k, tau_for(J), ordering_for(tau_for(J), adversarial=True),
                              seed=seed, exact=exact) for J in JUMPS]
    growth = adv[-1] / adv[0]
    capped = max(a * a / (J * adv[0] ** 2) for a, J in zip(adv, JUMPS))
    checks.append(Check("adversarial ordering J-growth (ratio J=1e8 / J=1)", growth, "> 10", growth > 10.0))
    checks.append(Check("adversarial ordering |Pi v|^2 <= C J |v|^2 (C / C(J=1))", capped, "<= 10", capped <= 10.0))

    v = rng.standard_normal(hierarchy.finest.free_vertices.size)
    rep = measure_decomposition(hierarchy, unit, unit.scaled(1.0), order, v)
    rel = rep.reconstruction_error / float(np.max(np.abs(v)))
    checks.append(Check("decomposition pieces sum to v", rel, "<= 1e-12", rel <= 1e-12))

    c = measure_scs(hierarchy, unit, seed=seed)
    band = float(np.mean(scs_band_ratios(c)))
    checks.append(Check("SCS off-diagonal decay (mean band ratio)", band, ">= 1.3", band >= 1.3))
    return checks

import numpy as np
import pytest
import scipy.sparse as sp

from rdmultilevel.coefficients import floating_component_count, subdomain_components
from rdmultilevel.errors import StructureError
from rdmultilevel.krylov import pcg
from rdmultilevel.problems import benchmark_hierarchy, setup_problem
from rdmultilevel.spectral import (
    SpectralReport,
    constrained_rayleigh_min,
    dense_spectrum,
    detect_isolated,
    effective_condition,
)


def test_exact_inverse_gives_ones(rng):
    A = sp.diags([1.0, 5.0, 9.0, 2.0]).tocsr()
    rep = dense_spectrum(A, np.diag(1 / A.diagonal()))
    np.testing.assert_allclose(rep.eigenvalues, 1.0)


def test_diagonal_example():
    eps = 1e-9
    rep = dense_spectrum(sp.diags([eps, 1.0, 2.0]), None)
    np.testing.assert_allclose(rep.eigenvalues, [eps, 1.0, 2.0])
    assert effective_condition(rep, 1) == pytest.approx(2.0)
    assert effective_condition(rep, 0) == pytest.approx(rep.kappa)


def test_effective_condition_examples():
    rep = SpectralReport(np.array([1e-8, 0.5, 1.0]))
    assert effective_condition(rep, 1) == pytest.approx(2.0)
    with pytest.raises(IndexError):
        effective_condition(rep, 3)
    with pytest.raises(IndexError):
        effective_condition(rep, -1)
    assert all(rep.kappa_m(m) <= rep.kappa for m in range(3))


def test_detect_isolated():
    assert detect_isolated(SpectralReport(np.linspace(1, 3, 50))) == 0
    assert detect_isolated(SpectralReport(np.array([1e-9, 1.0, 2.0, 3.0])), 10) == 1


def test_size_limit():
    with pytest.raises(StructureError):
        dense_spectrum(sp.identity(50), None, n_limit=10)


def test_cube_isolated_eigenvalue():
    H = benchmark_hierarchy("cube3d", 1)
    prob = setup_problem(H, [1e-8, 1], [1e-8, 1])
    rep = dense_spectrum(prob.A, prob.preconditioner("mg"))
    pos, ratio = rep.gap_location
    # one eigenvalue sits below the cluster; the gap is moderate at this size
    assert pos == 1 and ratio > 1.5
    assert rep.kappa_m(1) < rep.kappa / 1.5
    assert rep.m_detected <= 1


def test_lanczos_inside_dense_spectrum():
    H = benchmark_hierarchy("square2d", 2)
    for omega, rho in [([1, 1], [1, 1]), ([1e-8, 1], [1e4, 1])]:
        prob = setup_problem(H, omega, rho)
        for kind in ("jacobi", "sgs", "bpx", "mg"):
            B = prob.preconditioner(kind)
            rep = dense_spectrum(prob.A, B)
            cg = pcg(prob.A, B, prob.b)
            assert rep.lambda_min * (1 - 1e-8) <= cg.lambda_min_est
            assert cg.lambda_max_est <= rep.lambda_max * (1 + 1e-8)
            assert cg.kappa_est >= 0.5 * rep.kappa


def test_min_max_constrained_subspace():
    """Rayleigh minimum on the mean-zero-on-floating-regions subspace is <= lambda_{m0+1}(D^-1 A)."""
    H = benchmark_hierarchy("square2d", 1)
    prob = setup_problem(H, [1e-8, 1], [0, 0])
    fine = H.finest
    comp, floating = subdomain_components(H[0])
    comp_fine = comp[H.ancestors(0)]
    free = fine.free_vertices
    idx = -np.ones(fine.n_vertices, dtype=int)
    idx[free] = np.arange(free.size)
    rows = []
    for c in np.flatnonzero(floating):
        vol = np.zeros(fine.n_vertices)
        cells = np.flatnonzero(comp_fine == c)
        np.add.at(vol, fine.cells[cells].ravel(), np.repeat(fine.volumes()[cells], 3))
        rows.append(vol[free])
    C = np.array(rows)
    m0 = floating_component_count(H[0])
    assert C.shape[0] == m0
    D = sp.diags(prob.A.diagonal())
    rep = dense_spectrum(prob.A, sp.diags(1 / prob.A.diagonal()))
    assert constrained_rayleigh_min(prob.A, D, C) <= rep.eigenvalues[m0] * (1 + 1e-10)


def test_jacobi_c2_flatness():
    """Jacobi: kappa_0 grows with J(omega) in a C2 sweep while kappa_{m0} stays flat."""
    H = benchmark_hierarchy("cube3d", 1)
    m0 = floating_component_count(H[0])
    assert m0 == 2  # the two inclusions only share a corner
    k0, km = [], []
    for J in (1.0, 1e2, 1e4, 1e8):
        prob = setup_problem(H, [1 / J, 1], [1, 0])
        rep = dense_spectrum(prob.A, sp.diags(1 / prob.A.diagonal()))
        k0.append(rep.kappa)
        km.append(rep.kappa_m(m0))
        if J >= 1e2:
            assert rep.m_detected == m0
    assert max(km) / min(km) <= 3
    assert k0[-1] > 10 * k0[0]

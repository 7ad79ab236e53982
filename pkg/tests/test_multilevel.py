import numpy as np
import pytest
import scipy.sparse as sp

from rdmultilevel.assembly import assemble_operator
from rdmultilevel.coefficients import CoefficientField
from rdmultilevel.errors import CoarseSolveError, DefinitenessError, StructureError
from rdmultilevel.mesh import build_cube_mesh, build_hierarchy, build_square_mesh
from rdmultilevel.multilevel import (
    BPXPreconditioner,
    MGPreconditioner,
    bpx_apply,
    build_level_stack,
    build_prolongation,
    galerkin_coarsen,
    make_preconditioner,
    mg_vcycle_apply,
    smoother_apply,
)
from rdmultilevel.problems import setup_problem

JUMPY = ([1e-8, 1], [1e4, 1])


def test_prolongation_structure(cube2):
    P = build_prolongation(cube2, 2, free_only=False)
    nc = cube2[1].n_vertices
    np.testing.assert_array_equal(P[:nc].toarray(), np.eye(nc))
    fine_rows = P[nc:]
    assert np.all(np.diff(fine_rows.indptr) == 2)
    np.testing.assert_allclose(fine_rows.data, 0.5)
    np.testing.assert_allclose(P @ cube2[1].vertices, cube2[2].vertices, atol=1e-15)


def test_prolongation_constants(square3):
    P = build_prolongation(square3, 3, free_only=False)
    np.testing.assert_allclose(P @ np.ones(P.shape[1]), 1.0)


def test_prolongation_errors(square3):
    with pytest.raises(StructureError):
        build_prolongation(square3, 0)
    other = build_hierarchy(build_square_mesh(5), 1)
    from rdmultilevel.mesh import MeshHierarchy

    mixed = MeshHierarchy((square3[0], other[1]))
    with pytest.raises(StructureError):
        build_prolongation(mixed, 1)


@pytest.mark.parametrize("geometry", ["cube", "square"])
def test_galerkin_equals_direct(geometry):
    coarse = build_cube_mesh(4) if geometry == "cube" else build_square_mesh(6)
    H = build_hierarchy(coarse, 2)
    w, r = CoefficientField.from_list(JUMPY[0]), CoefficientField.from_list(JUMPY[1], "rho")
    for k in (1, 2):
        Af = assemble_operator(H[k], w, r)
        Ac = assemble_operator(H[k - 1], w, r)
        G = galerkin_coarsen(Af, build_prolongation(H, k))
        assert sp.linalg.norm(G - Ac) <= 1e-12 * sp.linalg.norm(Ac)
        assert abs(G - G.T).max() == 0


def test_galerkin_identity_and_mismatch():
    A = sp.random(6, 6, density=0.5, random_state=0)
    A = (A + A.T).tocsr()
    assert abs(galerkin_coarsen(A, sp.identity(6)) - A).max() < 1e-15
    with pytest.raises(StructureError):
        galerkin_coarsen(A, sp.identity(5))


def test_smoothers_on_diagonal(rng):
    A = sp.diags([2.0, 4.0, 8.0]).tocsr()
    r = rng.standard_normal(3)
    for kind in ("jacobi", "sgs"):
        np.testing.assert_allclose(smoother_apply(kind, A, r), r / A.diagonal())


def test_sgs_closed_form():
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    x = smoother_apply("sgs", A, np.array([1.0, 0.0]))
    LD = np.array([[2.0, 0.0], [-1.0, 2.0]])
    expected = np.linalg.solve(LD.T, np.diag([2.0, 2.0]) @ np.linalg.solve(LD, [1.0, 0.0]))
    np.testing.assert_allclose(x, expected)
    np.testing.assert_allclose(x, [5 / 8, 1 / 4])


def test_sgs_symmetric(rng, square3):
    prob = setup_problem(square3, [1, 1], [1, 1])
    r, s = rng.standard_normal((2, prob.n))
    assert r @ smoother_apply("sgs", prob.A, s) == pytest.approx(s @ smoother_apply("sgs", prob.A, r), rel=1e-12)


def test_zero_diagonal():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(DefinitenessError):
        smoother_apply("jacobi", A, np.ones(2))


def test_single_level_is_exact(rng):
    H = build_hierarchy(build_square_mesh(6), 0)
    prob = setup_problem(H, [1, 1], [1, 1])
    r = rng.standard_normal(prob.n)
    exact = np.linalg.solve(prob.A.toarray(), r)
    np.testing.assert_allclose(bpx_apply(prob.stack, r), exact, rtol=1e-10)
    np.testing.assert_allclose(mg_vcycle_apply(prob.stack, r), exact, rtol=1e-10)


@pytest.mark.parametrize("kind", ["bpx", "mg"])
def test_preconditioners_spd_and_linear(kind, rng):
    prob = setup_problem(benchmark_small(), *JUMPY)
    B = prob.preconditioner(kind)
    x, y = rng.standard_normal((2, prob.n))
    assert x @ B(y) == pytest.approx(y @ B(x), rel=1e-10)
    np.testing.assert_allclose(B(2 * x - 3 * y), 2 * B(x) - 3 * B(y), rtol=1e-10, atol=1e-12)
    Bd = B.as_dense(prob.n)
    assert np.linalg.eigvalsh(0.5 * (Bd + Bd.T))[0] > 0


def benchmark_small():
    return build_hierarchy(build_square_mesh(6), 2)


def test_mg_lambda_max_bounded():
    prob = setup_problem(benchmark_small(), *JUMPY)
    Bd = prob.preconditioner("mg").as_dense(prob.n)
    ev = np.linalg.eigvals(Bd @ prob.A.toarray()).real
    assert ev.max() <= 1 + 1e-10 and ev.min() > 0


def test_stack_mismatch(square3):
    prob = setup_problem(square3, [1, 1], [1, 1])
    with pytest.raises(StructureError):
        bpx_apply(prob.stack, np.ones(prob.n + 1))
    with pytest.raises(StructureError):
        mg_vcycle_apply(prob.stack, np.ones(3))
    with pytest.raises(StructureError):
        make_preconditioner("mg", prob.A)


def test_singular_coarse_operator():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(CoarseSolveError):
        build_level_stack(A, [])


def test_transfer_composite(square3):
    prob = setup_problem(square3, [1, 1], [1, 1])
    T = prob.stack.transfers
    x = np.arange(T.sizes[1], dtype=float)
    np.testing.assert_allclose(T.composite(1) @ x, T.prolong(x, 1))
    r = np.ones(T.sizes[-1])
    np.testing.assert_allclose(T.composite(1).T @ r, T.restrict(r, 1))
    assert isinstance(prob.preconditioner("bpx"), BPXPreconditioner)
    assert isinstance(prob.preconditioner("mg"), MGPreconditioner)

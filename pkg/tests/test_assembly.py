import numpy as np
import pytest
import scipy.sparse as sp

from rdmultilevel.assembly import (
    assemble_load,
    assemble_mass,
    assemble_operator,
    assemble_stiffness,
    element_mass,
    element_stiffness,
    export_matrix_market,
)
from rdmultilevel.coefficients import CoefficientField
from rdmultilevel.errors import ConfigurationError, GeometryError
from rdmultilevel.mesh import Mesh, build_cube_mesh, build_square_mesh

TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
ONE = CoefficientField.constant(1.0)
ZERO = CoefficientField.constant(0.0, name="rho")


def test_element_stiffness_triangle():
    K = element_stiffness(TRI, 1.0)
    np.testing.assert_allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    np.testing.assert_allclose(K.sum(axis=1), 0, atol=1e-15)
    assert not element_stiffness(TRI, 0.0).any()


def test_element_mass():
    M = element_mass(TRI, 1.0)
    np.testing.assert_allclose(np.diag(M), 1 / 12)
    assert M[0, 1] == pytest.approx(1 / 24)
    M3 = element_mass(TET, 1.0)
    np.testing.assert_allclose(np.diag(M3), 1 / 60)
    assert M3[0, 1] == pytest.approx(1 / 120)
    assert element_mass(TRI, 3.0).sum() == pytest.approx(1.5)


def test_degenerate_element():
    flat = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(GeometryError):
        element_stiffness(flat, 1.0)
    with pytest.raises(GeometryError):
        element_mass(flat, 1.0)


def criss_cross_patch():
    verts = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
    cells = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    bc = np.array([True, True, True, True, False])
    return Mesh(2, verts, cells, np.ones(4, dtype=np.int64), bc, h=1.0)


def test_patch_operator():
    A = assemble_operator(criss_cross_patch(), ONE, ZERO)
    assert A.shape == (1, 1) and A[0, 0] == pytest.approx(4.0)


def test_single_triangle_load():
    m = Mesh(2, TRI, np.array([[0, 1, 2]]), np.array([1]), np.array([True, False, True]), h=1.0)
    np.testing.assert_allclose(assemble_load(m, 1.0), [1 / 6])
    assert not assemble_load(m, 0.0).any()


def test_load_total():
    m = build_cube_mesh(4)
    assert assemble_load(m, 2.0, free_only=False).sum() == pytest.approx(2.0)


def test_linearity_in_rho():
    m = build_square_mesh(6)
    A0 = assemble_operator(m, ONE, ZERO)
    A1 = assemble_operator(m, ONE, CoefficientField.constant(1.0, name="rho"))
    diff = (A1 - A0 - assemble_mass(m)).toarray()
    assert np.abs(diff).max() < 1e-14


def test_symmetry_and_positivity(rng):
    m = build_cube_mesh(4)
    A = assemble_operator(m, CoefficientField.from_list([1e-8, 1]), CoefficientField.from_list([0, 1e8], "rho"))
    assert abs(A - A.T).max() == 0
    assert np.linalg.eigvalsh(A.toarray())[0] > 0
    assert np.all(np.diff(A.indptr) > 0)


def test_energy_identity(rng):
    m = build_square_mesh(6)
    w = CoefficientField.from_list([3.0, 0.5])
    r = CoefficientField.from_list([2.0, 7.0], "rho")
    A = assemble_operator(m, w, r)
    v = np.zeros(m.n_vertices)
    free = m.free_vertices
    v[free] = rng.standard_normal(free.size)
    energy = 0.0
    for c, lab in zip(m.cells, m.cell_subdomain):
        pts = m.vertices[c]
        energy += v[c] @ (element_stiffness(pts, w[lab]) + element_mass(pts, r[lab])) @ v[c]
    assert v[free] @ A @ v[free] == pytest.approx(energy, rel=1e-10)


def test_missing_coefficient():
    with pytest.raises(ConfigurationError):
        assemble_operator(build_cube_mesh(4), CoefficientField({1: 1.0}), ZERO)


def test_stiffness_constant_nullspace():
    m = build_square_mesh(4)
    K = assemble_stiffness(m, free_only=False)
    np.testing.assert_allclose(K @ np.ones(m.n_vertices), 0, atol=1e-13)


def test_matrix_market(tmp_path):
    import scipy.io

    A = assemble_operator(build_square_mesh(3), ONE, ZERO)
    path = tmp_path / "a.mtx"
    export_matrix_market(path, A, "test")
    B = sp.csr_matrix(scipy.io.mmread(path))
    assert abs(A - B).max() < 1e-15

import numpy as np
import pytest

from rdmultilevel.errors import GeometryError, MeshError
from rdmultilevel.mesh import (
    boundary_facets,
    build_cube_mesh,
    build_hierarchy,
    build_square_mesh,
    dump_ascii,
    on_domain_boundary,
    refine_uniform,
)


def test_cube_counts():
    m = build_cube_mesh(4)
    assert m.n_vertices == 125 and m.n_cells == 384
    assert set(np.unique(m.cell_subdomain)) == {1, 2}
    assert build_cube_mesh(8).n_vertices == 729


def test_cube_volumes_and_boundary():
    m = build_cube_mesh(4)
    vol = m.volumes()
    assert np.all(vol > 0)
    assert np.isclose(vol.sum(), 1.0)
    assert np.array_equal(m.vertex_is_dirichlet, on_domain_boundary(m))
    # inclusions are two quarter-cubes: 2 * (1/4)^3
    assert np.isclose(vol[m.cell_subdomain == 2].sum(), 2 / 64)


def test_cube_without_inclusions():
    m = build_cube_mesh(2, inclusion_boxes=[])
    assert np.all(m.cell_subdomain == 1)


@pytest.mark.parametrize("n", [1, 0, 2.5])
def test_cube_size_error(n):
    with pytest.raises(MeshError):
        build_cube_mesh(n)


def test_cube_unaligned_inclusion():
    with pytest.raises(MeshError):
        build_cube_mesh(4, [((0.1, 0.25, 0.25), (0.5, 0.5, 0.5))])


def test_square_mesh():
    m = build_square_mesh(6, assignment_seed=0)
    assert m.n_vertices == 49 and m.n_cells == 72
    assert set(np.unique(m.cell_subdomain)) == {1, 2}
    again = build_square_mesh(6, assignment_seed=0)
    assert np.array_equal(m.cell_subdomain, again.cell_subdomain)
    assert np.isclose(m.volumes().sum(), 1.0)


def test_square_single_label_seed():
    seed = next(s for s in range(5000) if np.all(build_square_mesh(2, s).cell_subdomain == 1))
    m = build_square_mesh(2, seed)
    assert m.subdomains.tolist() == [1]


@pytest.mark.parametrize("builder", [lambda: build_cube_mesh(4), lambda: build_square_mesh(6)])
def test_refinement_properties(builder):
    coarse = builder()
    fine = refine_uniform(coarse)
    nv = coarse.n_vertices
    assert np.array_equal(fine.vertices[:nv], coarse.vertices)
    assert fine.n_cells == coarse.n_cells * 2 ** coarse.dim
    child_vol = np.bincount(fine.parent_cell, weights=fine.volumes(), minlength=coarse.n_cells)
    np.testing.assert_allclose(child_vol, coarse.volumes(), rtol=1e-12)
    assert np.array_equal(fine.cell_subdomain, coarse.cell_subdomain[fine.parent_cell])
    assert np.array_equal(fine.vertex_is_dirichlet, on_domain_boundary(fine))
    mid = fine.vertices[fine.edge_parents].mean(axis=1)
    np.testing.assert_allclose(fine.vertices[nv:], mid)
    assert fine.h == pytest.approx(coarse.h / 2)


def test_hierarchy_sizes():
    H = build_hierarchy(build_cube_mesh(4), 3)
    assert [m.n_vertices for m in H.levels] == [125, 729, 4913, 35937]
    assert H.gamma == 0.5 and H.L == 3
    single = build_hierarchy(build_cube_mesh(4), 0)
    assert single.L == 0 and single.finest is single[0]


def test_ancestors_contain_descendants():
    H = build_hierarchy(build_square_mesh(6), 2)
    anc = H.ancestors(0)
    bary = H.finest.barycenters()
    coarse = H[0]
    for c in range(0, H.finest.n_cells, 37):
        T = coarse.vertices[coarse.cells[anc[c]]]
        lam = np.linalg.solve(np.vstack([T.T, np.ones(3)]), np.append(bary[c], 1.0))
        assert np.all(lam > 0)


def test_kuhn_refinement_quasi_uniform():
    H = build_hierarchy(build_cube_mesh(4), 2)
    for k, m in enumerate(H.levels):
        assert m.h <= H[0].h * 2.0 ** -k * np.sqrt(2) + 1e-12


def test_degenerate_cell_rejected():
    from rdmultilevel.mesh import _orient

    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(GeometryError):
        _orient(verts, np.array([[0, 1, 2]]))


def test_boundary_facets_square():
    m = build_square_mesh(3)
    facets = boundary_facets(m.cells)
    assert len(facets) == 12


def test_dump_ascii_roundtrip_counts():
    m = build_square_mesh(2)
    text = dump_ascii(m)
    lines = text.splitlines()
    assert lines[0] == "# vertices 9 dim 2"
    assert f"# cells {m.n_cells}" in lines
    assert len(lines) == 2 + m.n_vertices + m.n_cells

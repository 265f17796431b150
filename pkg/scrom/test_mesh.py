import numpy as np
import pytest
from numpy.testing import assert_allclose

from scrom.errors import DimensionError
from scrom.mesh import (
    Mesh1D,
    StaggeredGrid2D,
    SubdomainDecomposition,
    build_aggregation_matrix,
    subdomain_average,
)


def test_uniform_mesh_centers_and_length():
    mesh = Mesh1D.uniform(4, length=2.0)
    assert mesh.n_cells == 4
    assert_allclose(mesh.cell_volumes, 0.5)
    assert_allclose(mesh.cell_centers(), [0.25, 0.75, 1.25, 1.75])
    assert mesh.length == pytest.approx(2.0)


def test_mesh_rejects_bad_volumes():
    with pytest.raises(ValueError):
        Mesh1D(np.array([1.0, -1.0, 1.0]))
    with pytest.raises(DimensionError):
        Mesh1D.uniform(1)


def test_aggregation_matrix_weights_by_volume():
    mesh = Mesh1D(np.array([1.0, 2.0, 3.0, 4.0]))
    C = build_aggregation_matrix(mesh, SubdomainDecomposition.from_lists([[0, 2], [1, 2, 3]]))
    expected = np.array(
        [
            [0.25, 0.0],
            [0.0, 2.0 / 9.0],
            [0.75, 3.0 / 9.0],
            [0.0, 4.0 / 9.0],
        ]
    )
    assert_allclose(C, expected, rtol=0, atol=1e-15)
    assert_allclose(C.sum(axis=0), 1.0)


def test_overlapping_and_disconnected_subdomains():
    mesh = Mesh1D.uniform(10)
    decomp = SubdomainDecomposition.from_lists([[0, 1, 2, 3], [2, 3, 4], [0, 9]])
    C = build_aggregation_matrix(mesh, decomp)
    assert C.shape == (10, 3)
    assert_allclose(C[[0, 9], 2], 0.5)
    assert np.count_nonzero(C[:, 1]) == 3


def test_subdomain_average_of_constant_is_constant():
    mesh = Mesh1D(np.array([0.1, 0.3, 0.2, 0.4]))
    C = build_aggregation_matrix(mesh, SubdomainDecomposition.from_lists([[0, 3], [1, 2, 3]]))
    assert_allclose(subdomain_average(C, np.full(4, 2.5)), 2.5)


def test_empty_or_duplicate_subdomains_are_rejected():
    with pytest.raises(ValueError, match="empty"):
        SubdomainDecomposition.from_lists([[0, 1], []])
    with pytest.raises(ValueError, match="duplicate"):
        SubdomainDecomposition.from_lists([[1, 1]])


def test_out_of_range_index_names_the_subdomain():
    mesh = Mesh1D.uniform(5)
    with pytest.raises(DimensionError, match="subdomain 1"):
        build_aggregation_matrix(mesh, SubdomainDecomposition.from_lists([[0], [4, 5]]))


def test_subdomain_average_dimension_check():
    C = build_aggregation_matrix(Mesh1D.uniform(4), SubdomainDecomposition.from_lists([[0, 1]]))
    with pytest.raises(DimensionError):
        subdomain_average(C, np.ones(3))


def test_staggered_grid_layout():
    grid = StaggeredGrid2D(4, 3, lx=2.0, ly=1.5)
    assert grid.dx == pytest.approx(0.5)
    assert grid.dy == pytest.approx(0.5)
    assert grid.n_p == 12 and grid.n_v == 24
    assert grid.index(4, -1) == grid.index(0, 2)
    u = np.arange(12.0)
    v = -np.arange(12.0)
    su, sv = grid.split(grid.join(u, v))
    assert_allclose(su.ravel(), u)
    assert_allclose(sv.ravel(), v)
    assert grid.block(range(1, 3), range(0, 1)) == [3, 6]


def test_face_component_aggregation_is_offset():
    grid = StaggeredGrid2D(3, 3)
    decomp = SubdomainDecomposition.from_lists([[0, 1, 2]])
    Cu = build_aggregation_matrix(grid.component("u"), decomp)
    Cv = build_aggregation_matrix(grid.component("v"), decomp)
    assert Cu.shape == (18, 1)
    assert_allclose(Cu[:3, 0], 1.0 / 3.0)
    assert_allclose(Cu[9:, 0], 0.0)
    assert_allclose(Cv[9:12, 0], 1.0 / 3.0)
    assert_allclose(Cv[:9, 0], 0.0)


def test_unknown_component():
    with pytest.raises(ValueError):
        StaggeredGrid2D(3, 3).component("w")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsnucleate.grid import GAUSS_N, GridError, build_grid, shape_functions


def brute_neighbors(grid, node, radius):
    d = np.linalg.norm(grid.coords - grid.coords[node], axis=1)
    return sorted(np.flatnonzero(d < radius).tolist())


def test_unit_grid():
    g = build_grid(1, 1, 1.0)
    assert g.node_count == 4
    assert np.allclose(g.coords, [[0, 0], [1, 0], [0, 1], [1, 1]])


def test_example1_dimensions():
    g = build_grid(120, 80, 0.5)
    assert g.node_count == 9801
    assert (g.width, g.height) == (60.0, 40.0)


def test_hand_enumeration():
    g = build_grid(2, 1, 0.5)
    assert g.node_count == 6 and g.element_count == 2
    assert np.allclose(g.coords[4], [0.5, 0.5])
    assert np.allclose(g.coords[5], [1.0, 0.5])
    assert g.elements[1].tolist() == [1, 2, 5, 4]


@pytest.mark.parametrize("args", [(0, 3, 1.0), (3, -1, 1.0), (2, 2, 0.0), (2, 2, -1.0), (2.5, 2, 1.0)])
def test_invalid_grid(args):
    with pytest.raises(GridError):
        build_grid(*args)


def test_neighbor_examples():
    g = build_grid(10, 8, 0.5)
    assert g.neighbors_within(0, 0.25) == [(0, 0.0)]
    centre = g.node_index(5, 4)
    assert len(g.neighbors_within(centre, 1.6 * g.h)) == 9
    assert len(g.neighbors_within(centre, 1.01 * math.sqrt(2) * g.h)) == 9
    with pytest.raises(GridError):
        g.neighbors_within(g.node_count, 1.0)


@pytest.mark.parametrize("shape", [(7, 5), (50, 50)])
def test_neighbors_match_brute_force(shape):
    g = build_grid(*shape, 0.7)
    rng = np.random.default_rng(3)
    nodes = range(g.node_count) if g.node_count < 100 else rng.choice(g.node_count, 200, replace=False)
    for r in (0.5 * g.h, 1.6 * g.h, 2.3 * g.h):
        for n in nodes:
            got = sorted(i for i, _ in g.neighbors_within(int(n), r))
            assert got == brute_neighbors(g, int(n), r)


@settings(max_examples=40, deadline=None)
@given(nx=st.integers(1, 12), ny=st.integers(1, 12), r=st.floats(0.1, 4.0), data=st.data())
def test_neighbors_property(nx, ny, r, data):
    g = build_grid(nx, ny, 1.0)
    n = data.draw(st.integers(0, g.node_count - 1))
    got = g.neighbors_within(n, r)
    assert sorted(i for i, _ in got) == brute_neighbors(g, n, r)
    for i, d in got:
        assert d == pytest.approx(np.linalg.norm(g.coords[i] - g.coords[n]))


def test_shape_functions_partition_of_unity():
    rng = np.random.default_rng(0)
    for xi, eta in rng.uniform(-1, 1, (20, 2)):
        assert shape_functions(xi, eta).sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(GAUSS_N.sum(axis=1), 1.0)


def test_nodal_area_sums_to_domain():
    g = build_grid(6, 4, 0.3)
    assert g.nodal_area.sum() == pytest.approx(g.area)


def test_locate_outside():
    g = build_grid(2, 2, 1.0)
    with pytest.raises(GridError):
        g.locate(2.5, 0.5)

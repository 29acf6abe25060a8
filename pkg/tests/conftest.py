import numpy as np
import pytest

from netot import GridSpec, NetworkMeasure, build_network


@pytest.fixture
def single_edge_net():
    return build_network(
        [("a", (0.0, 0.0)), ("b", (1.0, 0.0))],
        [("e", "a", "b", 1.0)],
    )


@pytest.fixture
def star_net():
    """Four vertices, three edges all meeting at the center."""
    return build_network(
        [("c", (0.0, 0.0)), ("p1", (1.0, 0.0)), ("p2", (0.0, 1.0)), ("p3", (-1.0, 0.0))],
        [("e1", "c", "p1", 1.0), ("e2", "c", "p2", 1.0), ("e3", "c", "p3", 1.0)],
    )


def uniform_measure(net, grid, edge_mass=None, vertex_mass=None):
    """Measure with uniform cell densities; defaults to mass one on edges."""
    m = net.n_edges
    if edge_mass is None:
        edge_mass = [1.0 / m] * m
    dxs = grid.dx(net)
    densities = [
        np.full(grid.cells[j], edge_mass[j] / (grid.cells[j] * dxs[j])) for j in range(m)
    ]
    if vertex_mass is None:
        vertex_mass = np.zeros(net.n_vertices)
    return NetworkMeasure(densities, np.asarray(vertex_mass, dtype=float))


@pytest.fixture
def grid16(single_edge_net):
    return GridSpec.for_network(single_edge_net, 16, 8)

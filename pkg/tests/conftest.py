import numpy as np
import pytest

from pamlab import (
    DIRICHLET,
    NEUMANN,
    build_gasket,
    build_interval,
    build_metric_graph,
    eigendecompose,
)


@pytest.fixture(scope="session")
def interval50():
    return build_interval(50, 1.0)


@pytest.fixture(scope="session")
def interval50_d(interval50):
    return eigendecompose(interval50, DIRICHLET)


@pytest.fixture(scope="session")
def interval50_n(interval50):
    return eigendecompose(interval50, NEUMANN)


@pytest.fixture(scope="session")
def gasket3():
    return build_gasket(3)


@pytest.fixture(scope="session")
def gasket4():
    return build_gasket(4)


@pytest.fixture(scope="session")
def gasket4_d(gasket4):
    return eigendecompose(gasket4, DIRICHLET)


@pytest.fixture(scope="session")
def gasket4_n(gasket4):
    return eigendecompose(gasket4, NEUMANN)


@pytest.fixture(scope="session")
def star_graph():
    edges = [("hub", "a", 1.0), ("hub", "b", 1.0), ("hub", "c", 1.0)]
    return build_metric_graph(edges, 0.25, boundary=["a", "b", "c"])


@pytest.fixture(scope="session")
def star_graph_d(star_graph):
    return eigendecompose(star_graph, DIRICHLET)


def central_active_vertex(spec):
    """Active-set index of the vertex nearest the embedding centroid."""
    space = spec.space
    cen = int(np.argmin(np.linalg.norm(space.coords - space.coords.mean(0), axis=1)))
    pos = np.flatnonzero(spec.active == cen)
    if pos.size == 0:
        pos = [spec.n_active // 2]
    return int(pos[0])

import math

import numpy as np
import pytest

from pamlab import (
    CellWord,
    ahlfors_check,
    build_gasket,
    build_interval,
    build_metric_graph,
    space_from_json,
    space_to_json,
    subcell_extract,
    substream,
)
from pamlab.errors import InvalidGraphError, InvalidGridError, InvalidWordError


def test_interval_basic():
    sp = build_interval(2, 1.0)
    assert sp.n_vertices == 3
    assert np.allclose(sp.coords[:, 0], [0.0, 0.5, 1.0])
    assert set(sp.boundary.tolist()) == {0, 2}
    assert abs(sp.total_mass - 1.0) < 1e-12
    assert sp.dims == (1.0, 2.0)


def test_interval_trapezoid_weights():
    sp = build_interval(200, 1.0)
    assert sp.n_vertices == 201
    assert np.allclose(sp.mu[1:-1], 0.005)
    assert np.allclose(sp.mu[[0, -1]], 0.0025)
    assert abs(sp.total_mass - 1.0) < 1e-12


def test_interval_rejects_bad_grid():
    with pytest.raises(InvalidGridError):
        build_interval(1, 1.0)
    with pytest.raises(InvalidGridError):
        build_interval(10, -2.0)


@pytest.mark.parametrize("m", range(0, 7))
def test_gasket_vertex_count(m):
    # closed-form count 3 (3^m + 1) / 2
    sp = build_gasket(m)
    assert sp.n_vertices == 3 * (3**m + 1) // 2


def test_gasket_level0():
    sp = build_gasket(0)
    assert sp.n_vertices == 3
    assert np.allclose(sp.mu, 1.0 / 3.0)
    assert abs(sp.total_mass - 1.0) < 1e-12
    assert set(sp.boundary.tolist()) == {0, 1, 2}


def test_gasket_mass_and_dims():
    sp = build_gasket(4)
    assert abs(sp.total_mass - 1.0) < 1e-12
    assert abs(sp.d_h - math.log(3) / math.log(2)) < 1e-15
    assert abs(sp.d_w - math.log(5) / math.log(2)) < 1e-15
    # interior vertices carry twice the corner weight
    corner_mu = sp.mu[sp.boundary[0]]
    interior = np.setdiff1d(np.arange(sp.n_vertices), sp.boundary)
    assert np.allclose(sp.mu[interior], 2 * corner_mu)
    assert np.allclose(corner_mu, 3.0 ** (-4) / 3.0)


def test_gasket_degrees():
    sp = build_gasket(3)
    deg = sp.degrees
    assert np.all(deg[sp.boundary] == 2)
    interior = np.setdiff1d(np.arange(sp.n_vertices), sp.boundary)
    assert np.all(deg[interior] == 4)


def test_gasket_edge_lengths_euclidean():
    sp = build_gasket(3)
    for (i, j), length in zip(sp.edges, sp.edge_length):
        d = np.linalg.norm(sp.coords[i] - sp.coords[j])
        assert abs(d - length) < 1e-12
        assert abs(length - 2.0**-3) < 1e-12


def test_triangle_inequality_sampled():
    sp = build_gasket(4)
    rng = substream(123, 1)
    ids = rng.integers(0, sp.n_vertices, size=(60, 3))
    d = sp.geodesic_distances(np.unique(ids))
    row = {v: k for k, v in enumerate(np.unique(ids))}
    for a, b, c in ids:
        dab = d[row[a], b]
        dac = d[row[a], c]
        dcb = d[row[c], b]
        assert dab <= dac + dcb + 1e-12


def test_metric_graph_single_edge_matches_interval():
    sp = build_metric_graph([("a", "b", 1.0)], 0.5, boundary=["a", "b"])
    ref = build_interval(2, 1.0)
    assert sp.n_vertices == ref.n_vertices
    assert abs(sp.total_mass - 1.0) < 1e-12
    assert sorted(sp.mu.tolist()) == sorted(ref.mu.tolist())
    assert np.allclose(sorted(sp.conductance), sorted(ref.conductance))


def test_metric_graph_star():
    edges = [("hub", "a", 1.0), ("hub", "b", 1.0), ("hub", "c", 1.0)]
    sp = build_metric_graph(edges, 0.25, boundary=["a", "b", "c"])
    # 3 edges x 4 segments: 3 leaves + 9 internal + hub = 13 vertices
    assert sp.n_vertices == 13
    assert abs(sp.total_mass - 3.0) < 1e-12
    hub_mu = sp.mu[0]
    assert abs(hub_mu - 3 * 0.125) < 1e-12
    assert sp.boundary.size == 3


def test_metric_graph_triangle_neumann_only():
    edges = [("a", "b", 1.0), ("b", "c", 1.0), ("c", "a", 1.0)]
    sp = build_metric_graph(edges, 0.25)
    assert sp.boundary.size == 0
    assert abs(sp.total_mass - 3.0) < 1e-12


def test_metric_graph_rejects_disconnected():
    edges = [("a", "b", 1.0), ("c", "d", 1.0)]
    with pytest.raises(InvalidGraphError):
        build_metric_graph(edges, 0.25)


def test_metric_graph_rejects_coarse_mesh():
    with pytest.raises(InvalidGridError):
        build_metric_graph([("a", "b", 1.0)], 2.0)


def test_metric_graph_boundary_must_be_degree_one():
    edges = [("a", "b", 1.0), ("b", "c", 1.0)]
    with pytest.raises(InvalidGraphError):
        build_metric_graph(edges, 0.25, boundary=["b"])


def test_cellword_validates_letters():
    with pytest.raises(InvalidWordError):
        CellWord((1, 4))


def test_subcell_level1_is_gasket0():
    g = build_gasket(1)
    sub, parent_ids = subcell_extract(g, (1,))
    assert sub.n_vertices == 3
    assert abs(sub.total_mass - 1.0 / 3.0) < 1e-14
    assert np.allclose(sub.mu, build_gasket(0).mu / 3.0)
    assert len(set(parent_ids.tolist())) == 3


def test_subcell_empty_word_identity():
    g = build_gasket(2)
    sub, parent_ids = subcell_extract(g, ())
    assert np.array_equal(parent_ids, np.arange(g.n_vertices))
    assert np.allclose(sub.mu, g.mu)
    assert np.array_equal(sub.edges, g.edges)


def test_subcell_depth2_enumeration_oracle():
    # oracle: a level-3 vertex lies in cell (1, 2) iff unwinding the two maps
    # (subtract the scale times the letter's unit vector, halving the scale)
    # leaves nonnegative integer coordinates
    g = build_gasket(3)
    word = (1, 2)

    def in_cell(triple):
        t = list(triple)
        s = 8
        for letter in word:
            s //= 2
            t[letter - 1] -= s
            if t[letter - 1] < 0:
                return None
        return tuple(t)

    expected = {}
    for idx, triple in enumerate(g.lattice):
        t = in_cell(triple)
        if t is not None:
            expected[t] = idx
    sub, parent_ids = subcell_extract(g, word)
    assert sub.n_vertices == len(expected) == 6  # a gasket(1)
    assert abs(sub.total_mass - 1.0 / 9.0) < 1e-14
    assert set(parent_ids.tolist()) == set(expected.values())


def test_subcell_measure_consistency():
    # pulled-back mass equals 3^-n times the canonical gasket(m) mass vertexwise
    g = build_gasket(4)
    base = build_gasket(2)
    sub, _ = subcell_extract(g, (3, 1))
    assert np.allclose(sub.mu, base.mu * 3.0**-2)
    assert np.array_equal(sub.edges, base.edges)


def test_subcell_word_too_long():
    g = build_gasket(1)
    with pytest.raises(InvalidWordError):
        subcell_extract(g, (1, 2, 3))


def test_ahlfors_bands():
    for sp in (build_interval(100, 1.0), build_gasket(5),
               build_metric_graph([("a", "b", 1.0), ("b", "c", 1.5),
                                   ("b", "d", 0.5)], 0.1,
                                  boundary=["a", "c", "d"])):
        lo, hi, ok = ahlfors_check(sp, samples=200)
        assert ok, f"{sp.kind}: ratios ({lo:.3f}, {hi:.3f}) left the recorded band"
        assert hi / lo <= 10.0


def test_serialization_round_trip():
    for sp in (build_interval(7, 2.0), build_gasket(2),
               build_metric_graph([("a", "b", 1.0), ("b", "c", 1.0)], 0.5,
                                  boundary=["a", "c"])):
        text = space_to_json(sp)
        back = space_from_json(text)
        assert back.kind == sp.kind
        assert np.allclose(back.coords, sp.coords)
        assert np.allclose(back.mu, sp.mu)
        assert np.array_equal(back.edges, sp.edges)
        assert np.allclose(back.conductance, sp.conductance)
        assert np.array_equal(back.boundary, sp.boundary)
        # deterministic text
        assert space_to_json(back) == text


def test_gasket_ordering_deterministic():
    a = build_gasket(3)
    b = build_gasket(3)
    assert np.array_equal(a.lattice, b.lattice)
    assert np.array_equal(a.edges, b.edges)

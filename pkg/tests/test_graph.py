import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netinverse import EdgeFunction, Graph, classify_vertices, divergence, energy, gradient, vertex_flux
from netinverse.exceptions import DimensionError, GraphError
from netinverse.graph import check_measurement, inner_e, inner_v

from .conftest import connected_graph, graphs


def test_graph_sorts_edges_and_keeps_boundary_order():
    g = Graph(4, [(2, 1), (0, 1), (3, 2)], boundary=(3, 0))
    assert g.edges.tolist() == [[0, 1], [1, 2], [2, 3]]
    assert g.boundary == (3, 0)
    assert g.interior == (1, 2)


@pytest.mark.parametrize(
    "edges, msg",
    [
        ([(0, 0), (0, 1)], "self-loop"),
        ([(0, 1), (1, 0)], "duplicate"),
        ([(0, 1)], "not connected"),
        ([(0, 5)], "outside"),
    ],
)
def test_graph_rejects_bad_structure(edges, msg):
    with pytest.raises(GraphError, match=msg):
        Graph(3, edges)


def test_boundary_required_for_solves():
    with pytest.raises(GraphError):
        Graph(2, [(0, 1)]).require_boundary()


def test_edge_function_kinds_enforced(path3):
    with pytest.raises(ValueError):
        EdgeFunction(path3, [1.0, 2.0], [1.0, 2.0], "antisymmetric")
    with pytest.raises(ValueError):
        EdgeFunction.symmetric(path3, [-1.0, 2.0])
    with pytest.raises(ValueError, match="off the edge set"):
        EdgeFunction.from_dense(path3, np.ones((3, 3)) - np.eye(3))


def test_gradient_path(path3):
    Du = gradient(path3, [1.0, 0.5, 0.0])
    assert Du[0, 1] == 0.5 and Du[1, 2] == 0.5
    assert Du[0, 2] == 0.0
    assert Du[1, 0] == -0.5


def test_gradient_triangle(triangle):
    Du = gradient(triangle, [1.0, 0.0, -1.0])
    assert (Du[0, 1], Du[0, 2], Du[1, 2]) == (1.0, 2.0, 1.0)


def test_gradient_dimension_mismatch(path3):
    with pytest.raises(DimensionError):
        gradient(path3, [1.0, 2.0])


def test_divergence_path(path3):
    b = EdgeFunction.antisymmetric(path3, [0.5, 0.5])
    assert divergence(path3, b).tolist() == [-1.0, 0.0, 1.0]
    assert divergence(path3, EdgeFunction.zeros(path3)).tolist() == [0.0, 0.0, 0.0]


def test_divergence_of_general_function_matches_dense_sum():
    g, rng = connected_graph(3, 6)
    b = EdgeFunction(g, rng.normal(size=g.m), rng.normal(size=g.m))
    M = b.to_dense()
    expected = M.sum(axis=0) - M.sum(axis=1)
    assert np.allclose(divergence(g, b), expected, atol=1e-14)
    assert abs(divergence(g, b).sum()) < 1e-12


def test_inner_products():
    assert inner_v([1, 1, 1], [1, 1, 1]) == 3.0
    with pytest.raises(DimensionError):
        inner_v([1, 2], [1, 2, 3])


def test_energy_path(path3):
    a = EdgeFunction.symmetric(path3, [0.5, 0.5])
    assert energy(a, [1.0, 0.5, 0.0]) == pytest.approx(0.5)
    assert energy(a, [2.0, 2.0, 2.0]) == 0.0


def test_energy_dense_and_edge_forms_agree():
    g, rng = connected_graph(11, 5, density=0.6)
    a = EdgeFunction.symmetric(g, rng.random(g.m))
    u = rng.normal(size=g.n)
    assert energy(a.to_dense(), u) == pytest.approx(energy(a, u), rel=1e-14)
    assert energy(a, u) == pytest.approx(inner_e(a, gradient(g, u).abs()) / 2, rel=1e-14)


def test_vertex_flux_path(path3):
    J = EdgeFunction.antisymmetric(path3, [0.5, 0.5])
    assert vertex_flux(path3, J).tolist() == [0.5, 0.0, -0.5]
    assert classify_vertices(path3, J) == ((1,), (0, 2))


def test_check_measurement_rejects_asymmetric(path3):
    with pytest.raises(ValueError):
        check_measurement(path3, EdgeFunction(path3, [1.0, 1.0], [1.0, 2.0]))
    with pytest.raises(ValueError):
        check_measurement(path3, [1.0, -1.0])


@given(graphs(), st.integers(0, 1000))
def test_adjointness(gs, k):
    g, _ = gs
    rng = np.random.default_rng(k)
    u = rng.normal(size=g.n)
    b = EdgeFunction.antisymmetric(g, rng.normal(size=g.m))
    lhs = inner_v(u, -divergence(g, b))
    rhs = inner_e(gradient(g, u), b)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


@given(graphs(), st.integers(0, 1000))
def test_total_divergence_and_flux_vanish(gs, k):
    g, _ = gs
    rng = np.random.default_rng(k)
    b = EdgeFunction(g, rng.normal(size=g.m), rng.normal(size=g.m))
    assert abs(divergence(g, b).sum()) < 1e-12
    J = EdgeFunction.antisymmetric(g, rng.normal(size=g.m))
    assert abs(vertex_flux(g, J).sum()) < 1e-12


@given(graphs(), st.floats(-5, 5))
def test_gradient_of_constant_and_zero_energy(gs, c):
    g, _ = gs
    u = np.full(g.n, c)
    assert not gradient(g, u).forward.any()
    assert energy(EdgeFunction.symmetric(g, np.ones(g.m)), u) == 0.0


@given(graphs(), st.integers(0, 1000))
def test_energy_convex_and_nonnegative(gs, k):
    g, _ = gs
    rng = np.random.default_rng(k)
    a = EdgeFunction.symmetric(g, rng.random(g.m))
    u, v = rng.normal(size=(2, g.n))
    assert energy(a, u) >= 0
    assert energy(a, (u + v) / 2) <= (energy(a, u) + energy(a, v)) / 2 + 1e-12

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from netinverse import (
    EdgeFunction,
    Graph,
    current_from_potential,
    design_transitions,
    simulate_net_passages,
    solve_neumann_forward,
    transitions_from_conductivity,
)
from netinverse.bench import random_graph
from netinverse.exceptions import GraphError, InfeasibleDesignError
from netinverse.random_walk import TransitionDesigner, TransitionMatrix


def expected_passages(tm, entry, entry_probs, exit):
    """Net passages from the fundamental matrix of the absorbing chain."""
    P = tm.to_dense()
    n = P.shape[0]
    keep = np.setdiff1d(np.arange(n), exit)
    Q = P[np.ix_(keep, keep)]
    start = np.zeros(n)
    start[list(entry)] = entry_probs
    visits = np.zeros(n)
    visits[keep] = np.linalg.solve((np.eye(len(keep)) - Q).T, start[keep])
    g = tm.graph
    h, t = g.heads, g.tails
    return visits[h] * P[h, t] - visits[t] * P[t, h]


def unit_flow(seed, n=12, density=0.4):
    rng = np.random.default_rng(seed)
    g = random_graph(n, rng, density=density)
    sigma = 1.0 - rng.random(g.m)
    entry, exit_ = (0,), (n - 1,)
    gb = g.with_boundary(entry + exit_)
    v = solve_neumann_forward(gb, sigma, [1.0, -1.0])
    W = current_from_potential(gb, sigma, v)
    return g, sigma, W, entry, exit_


def test_path_transitions(path3):
    P = transitions_from_conductivity(path3, [1.0, 1.0]).to_dense()
    assert P[1].tolist() == [0.5, 0.0, 0.5]
    assert P[0, 1] == 1.0 and P[2, 1] == 1.0


def test_triangle_rows_uniform(triangle):
    P = transitions_from_conductivity(triangle, [1.0, 1.0, 1.0]).to_dense()
    assert np.array_equal(P, (np.ones((3, 3)) - np.eye(3)) / 2)


@given(st.integers(0, 10_000), st.integers(-30, 30))
def test_scale_invariance_power_of_two(seed, k):
    rng = np.random.default_rng(seed)
    g = random_graph(8, rng, density=0.5)
    sigma = 1.0 - rng.random(g.m)
    base = transitions_from_conductivity(g, sigma).to_dense()
    assert np.array_equal(transitions_from_conductivity(g, 2.0**k * sigma).to_dense(), base)


@given(st.integers(0, 10_000), st.integers(1, 1000))
def test_scale_invariance_integer_conductances(seed, c):
    # c * sigma and every row sum are exact, so the divisions agree bit for bit
    rng = np.random.default_rng(seed)
    g = random_graph(8, rng, density=0.5)
    sigma = rng.integers(1, 100, size=g.m).astype(float)
    base = transitions_from_conductivity(g, sigma).to_dense()
    assert np.array_equal(transitions_from_conductivity(g, c * sigma).to_dense(), base)


@given(st.integers(0, 10_000), st.floats(1e-6, 1e6))
def test_scale_invariance_within_rounding(seed, c):
    rng = np.random.default_rng(seed)
    g = random_graph(8, rng, density=0.5)
    sigma = 1.0 - rng.random(g.m)
    base = transitions_from_conductivity(g, sigma).to_dense()
    scaled = transitions_from_conductivity(g, c * sigma).to_dense()
    assert np.allclose(scaled, base, rtol=8 * np.finfo(float).eps, atol=0)


def test_zero_conductance_vertex_rejected(path3):
    with pytest.raises(GraphError, match="no conducting edge"):
        transitions_from_conductivity(path3, [1.0, 0.0])
    tm = transitions_from_conductivity(path3, [1.0, 0.0], allow_isolated=True)
    assert tm.isolated == (2,)


def test_transition_matrix_validation(path3):
    with pytest.raises(ValueError, match="sum to one"):
        TransitionMatrix(path3, sp.csr_matrix(np.array([[0, 0.5, 0], [0.5, 0, 0.5], [0, 1, 0.0]])))
    with pytest.raises(ValueError, match="3x3"):
        TransitionMatrix(path3, sp.eye(2, format="csr"))


def test_design_on_path(path3):
    d = design_transitions(path3, [1.0, 1.0], entry=(0,), exit=(2,))
    P = d.transitions.to_dense()
    assert P[1, [0, 2]] == pytest.approx([0.5, 0.5], abs=1e-9)
    assert d.residual <= 1e-6


def test_design_on_triangle_recovers_uniform_conductance(triangle):
    # edges (0,1), (0,2), (1,2): the unit-resistor currents for one unit in at 0
    W = [1 / 3, 2 / 3, 1 / 3]
    d = design_transitions(triangle, W, entry=(0,), exit=(2,))
    s = d.sigma.values
    assert np.allclose(s / s.mean(), 1.0, atol=1e-7)
    P = d.transitions.to_dense()
    assert np.allclose(P[:2], (np.ones((3, 3)) - np.eye(3))[:2] / 2, atol=1e-7)


def test_design_rejects_zero_flow(path3):
    with pytest.raises(InfeasibleDesignError):
        design_transitions(path3, [0.0, 0.0], entry=(0,), exit=(2,))


def test_design_rejects_leak_and_wrong_outflow(triangle):
    with pytest.raises(InfeasibleDesignError, match="leak"):
        design_transitions(triangle, [1.0, 0.0, 0.0], entry=(0,), exit=(2,))
    with pytest.raises(InfeasibleDesignError, match="expected 1"):
        design_transitions(triangle, [1.0, 2.0, 1.0], entry=(0,), exit=(2,))


def test_design_rejects_bad_sets(path3):
    with pytest.raises(ValueError, match="disjoint"):
        design_transitions(path3, [1.0, 1.0], entry=(0,), exit=(0,))
    with pytest.raises(ValueError, match="nonempty"):
        design_transitions(path3, [1.0, 1.0], entry=(), exit=(2,))


def test_relative_design_reports_scale(triangle):
    W = np.array([1 / 3, 2 / 3, 1 / 3])
    d = design_transitions(triangle, 3 * W, entry=(0,), exit=(2,), relative=True)
    assert d.lam == pytest.approx(3.0, rel=1e-7)
    ref = design_transitions(triangle, W, entry=(0,), exit=(2,))
    assert np.allclose(d.transitions.to_dense(), ref.transitions.to_dense(), atol=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_designed_chain_realizes_the_passages(seed):
    # a single flow does not pin down the conductances, so the design is
    # checked through the passages its chain produces, not through sigma
    g, sigma, W, entry, exit_ = unit_flow(seed)
    d = design_transitions(g, W, entry, exit_)
    got = expected_passages(d.transitions, entry, [1.0], exit_)
    assert np.abs(got - W.forward).max() <= 1e-6 * max(1.0, np.abs(W.forward).max())
    truth = transitions_from_conductivity(g, sigma, absorbing=exit_)
    assert np.allclose(expected_passages(truth, entry, [1.0], exit_), W.forward, atol=1e-10)


def test_path_walks_cross_each_edge_once_net(path3):
    tm = transitions_from_conductivity(path3, [1.0, 1.0], absorbing=(2,))
    est = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=100_000, seed=3)
    assert est.mean.forward.tolist() == [1.0, 1.0]
    assert not est.stderr.any()


def test_triangle_simulation_within_three_standard_errors(triangle):
    tm = transitions_from_conductivity(triangle, [1.0, 1.0, 1.0], absorbing=(2,))
    est = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=100_000, seed=0)
    W = np.array([1 / 3, 2 / 3, 1 / 3])
    assert (np.abs(est.mean.forward - W) <= 3 * est.stderr).all()
    assert np.allclose(expected_passages(tm, (0,), [1.0], (2,)), W, atol=1e-14)


def test_deterministic_chain():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)])
    P = np.zeros((4, 4))
    P[0, 1] = P[1, 2] = P[2, 3] = 1.0
    tm = TransitionMatrix(g, sp.csr_matrix(P), absorbing=(3,))
    est = simulate_net_passages(tm, (0,), [1.0], (3,), walkers=10)
    assert est.mean.forward.tolist() == [1.0, 1.0, 1.0]
    assert est.max_steps == 3


def test_immediate_absorption(triangle):
    P = np.array([[0.0, 0.0, 1.0], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    tm = TransitionMatrix(triangle, sp.csr_matrix(P), absorbing=(2,))
    est = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=50)
    assert est.mean.forward.tolist() == [0.0, 1.0, 0.0]
    assert est.max_steps == 1


def test_walkers_starting_on_exit_never_move(path3):
    tm = transitions_from_conductivity(path3, [1.0, 1.0], absorbing=(0, 2))
    est = simulate_net_passages(tm, (0,), [1.0], (0, 2), walkers=5)
    assert not est.mean.forward.any() and est.max_steps == 0


def test_unreachable_exit():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)])
    P = np.zeros((4, 4))
    P[0, 1] = 1.0
    P[1, 0] = 1.0
    P[2, 3] = P[3, 2] = 1.0
    tm = TransitionMatrix(g, sp.csr_matrix(P), absorbing=(3,))
    with pytest.raises(GraphError, match="cannot reach the exit"):
        simulate_net_passages(tm, (0,), [1.0], (3,), walkers=10)


def test_step_cap(path3):
    tm = transitions_from_conductivity(path3, [1.0, 1.0], absorbing=(2,))
    with pytest.raises(RuntimeError, match="without absorption"):
        simulate_net_passages(tm, (0,), [1.0], (2,), walkers=1000, step_cap=1)


def test_simulation_is_reproducible(triangle):
    tm = transitions_from_conductivity(triangle, [1.0, 2.0, 0.5], absorbing=(2,))
    a = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=3000, seed=11, batch=700)
    b = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=3000, seed=11, batch=700)
    c = simulate_net_passages(tm, (0,), [1.0], (2,), walkers=3000, seed=12, batch=700)
    assert np.array_equal(a.mean.forward, b.mean.forward)
    assert not np.array_equal(a.mean.forward, c.mean.forward)


def test_simulation_rejects_bad_inputs(path3):
    tm = transitions_from_conductivity(path3, [1.0, 1.0], absorbing=(2,))
    with pytest.raises(ValueError, match="distribution"):
        simulate_net_passages(tm, (0,), [0.5], (2,), walkers=10)
    with pytest.raises(ValueError, match="walker"):
        simulate_net_passages(tm, (0,), [1.0], (2,), walkers=0)


def test_designer_estimator(triangle):
    est = TransitionDesigner(tol=1e-10)
    assert est.get_params() == {"alpha": 1.0, "tol": 1e-10, "max_iter": 200_000, "relative": False}
    assert clone(est).get_params() == est.get_params()
    est.fit(triangle, [1 / 3, 2 / 3, 1 / 3], entry=(0,), exit=(2,))
    assert est.entry_probs_.tolist() == pytest.approx([1.0])
    assert est.residual_ <= 1e-6
    out = est.simulate(20_000, seed=1)
    assert (np.abs(out.mean.forward - [1 / 3, 2 / 3, 1 / 3]) <= 4 * out.stderr).all()


def test_designer_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        TransitionDesigner().simulate(10)


def test_edge_function_input_for_design(path3):
    W = EdgeFunction.antisymmetric(path3, [1.0, 1.0])
    d = design_transitions(path3, W, entry=(0,), exit=(2,))
    assert d.transitions.absorbing == (2,)

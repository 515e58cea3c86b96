import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netinverse import (
    AdmmConfig,
    EdgeFunction,
    build_lift_neumann,
    divergence,
    rescale_to_unit_flux,
    solve_inverse_neumann,
    solve_neumann_forward,
    current_from_potential,
    step_u_neumann,
    vertex_flux,
)
from netinverse.exceptions import DegenerateDataError, IncompatibleDataError, NonConvergenceWarning

from .conftest import connected_graph


def neumann_instance(seed, n=8, n_boundary=3, density=0.5):
    g, rng = connected_graph(seed, n, density, n_boundary)
    sigma = 1.0 - rng.random(g.m)
    gN = rng.normal(size=n_boundary)
    gN -= gN.mean()
    v = solve_neumann_forward(g, sigma, gN)
    return g, sigma, gN, current_from_potential(g, sigma, v)


def test_lift_path(path3):
    lift = build_lift_neumann(path3, [1.0, -1.0])
    assert np.allclose(lift.z, [0.0, -1.0, -2.0], atol=1e-14)
    assert lift.denom == pytest.approx(2.0)
    assert lift.v_g.tolist() == [0.5, 0.0, -0.5]
    assert lift.v_g[[0, 2]] @ np.array([1.0, -1.0]) == pytest.approx(1.0, abs=1e-12)


def test_lift_scaling(path3):
    base = build_lift_neumann(path3, [1.0, -1.0])
    lift = build_lift_neumann(path3, [3.0, -3.0])
    assert np.allclose(lift.z, 3 * base.z)
    assert np.allclose(lift.v_g, base.v_g / 3)


def test_lift_rejects_incompatible(path3):
    with pytest.raises(IncompatibleDataError):
        build_lift_neumann(path3, [1.0, 0.0])


def test_step_u_neumann(path3):
    lift = build_lift_neumann(path3, [1.0, -1.0])
    z = EdgeFunction.zeros(path3)
    assert not step_u_neumann(path3, z, z, lift).any()
    b = EdgeFunction.antisymmetric(path3, [1.0, 0.0])
    v = step_u_neumann(path3, b, z, lift)
    assert abs(v[[0, 2]] @ np.array([1.0, -1.0])) <= 1e-12
    # grounded solve of the half divergence (-1, 1, 0) gives u = (0, 1, 1),
    # so beta = -(u0 - u2)/2 = 1/2 shifts along z = (0, -1, -2)
    assert np.allclose(v, [0.0, 0.5, 0.0], atol=1e-14)


def test_step_u_neumann_keeps_projected_potential(path3):
    g = path3
    lift = build_lift_neumann(g, [1.0, -1.0])
    # a symmetric right-hand side already has u_0 = u_2
    b = EdgeFunction.antisymmetric(g, [1.0, -1.0])
    v = step_u_neumann(g, b, EdgeFunction.zeros(g), lift)
    assert v[0] == pytest.approx(v[2], abs=1e-14)


def test_path_neumann_scale(path3):
    a = EdgeFunction.symmetric(path3, [1.0, 1.0])
    sol = solve_inverse_neumann(path3, [1.0, -1.0], a)
    # minimum of |u0 - u1| + |u1 - u2| subject to u0 - u2 = 1, by grid search
    t = np.linspace(-2, 3, 5001)
    grid_min = (np.abs(1.0 - t) + np.abs(t)).min()
    assert sol.lam == pytest.approx(grid_min, abs=1e-6)
    assert sol.current.forward == pytest.approx([1.0, 1.0], abs=1e-6)
    flux = vertex_flux(path3, sol.current)
    assert flux[0] == pytest.approx(sol.lam, abs=1e-6)
    unit = rescale_to_unit_flux(sol)
    assert vertex_flux(path3, unit.current) == pytest.approx([1.0, 0.0, -1.0], abs=1e-6)


def test_zero_measurement_is_degenerate(path3):
    with pytest.warns(NonConvergenceWarning, match="degenerate"):
        sol = solve_inverse_neumann(path3, [1.0, -1.0], [0.0, 0.0])
    assert sol.report.degenerate and sol.conductivity is None
    with pytest.raises(DegenerateDataError):
        rescale_to_unit_flux(sol)


def test_rescale_identity_when_scale_is_one(path3):
    sol = solve_inverse_neumann(path3, [1.0, -1.0], [1.0, 1.0], AdmmConfig(tol=1e-10))
    out = rescale_to_unit_flux(sol)
    assert np.allclose(out.current.forward, sol.current.forward, atol=1e-9)


@given(st.integers(0, 10_000))
def test_neumann_solution_properties(seed):
    g, sigma, gN, J = neumann_instance(seed)
    a = J.abs()
    tol = 1e-8
    cfg = AdmmConfig(tol=tol, max_iter=100_000)
    sol = solve_inverse_neumann(g, gN, a, cfg)
    rep = sol.report
    assert rep.converged
    # consistent unit data: the minimum is one
    assert abs(rep.lam - 1.0) <= 10 * tol
    u = sol.potential
    assert u[g.boundary_index] @ gN == pytest.approx(1.0, abs=1e-12)
    Jr = sol.current.forward
    scale = max(1.0, a.forward.max())
    assert (np.abs(Jr) <= a.forward + tol * scale).all()
    div = divergence(g, sol.current)
    assert np.abs(div[g.interior_index]).max(initial=0.0) <= 1e-6
    assert rep.flux_fit_residual <= 1e-6
    du = u[g.heads] - u[g.tails]
    assert (Jr * du >= -1e-9).all()
    live = np.abs(du) > 1e-6
    assert np.allclose(np.abs(Jr[live]), a.forward[live], atol=1e-6)
    unit = rescale_to_unit_flux(sol)
    assert np.allclose(vertex_flux(g, unit.current)[g.boundary_index], gN, atol=1e-6)
    assert np.allclose(unit.current.forward, J.forward, atol=1e-6)


def test_grounding_independence():
    g, sigma, gN, J = neumann_instance(5, n=10)
    cfg = AdmmConfig(tol=1e-8, max_iter=100_000)
    s0 = solve_inverse_neumann(g, gN, J.abs(), cfg, ground=0)
    s1 = solve_inverse_neumann(g, gN, J.abs(), cfg, ground=g.n - 1)
    assert np.abs(s0.current.forward - s1.current.forward).max() <= 1e-9
    du0 = s0.potential[g.heads] - s0.potential[g.tails]
    du1 = s1.potential[g.heads] - s1.potential[g.tails]
    assert np.allclose(du0, du1, atol=1e-9)


def test_alignment_across_initializations():
    g, sigma, gN, J = neumann_instance(8, n=10)
    a = J.abs()
    rng = np.random.default_rng(0)
    s0 = solve_inverse_neumann(g, gN, a, AdmmConfig(tol=1e-9, max_iter=100_000))
    s1 = solve_inverse_neumann(
        g, gN, a, AdmmConfig(tol=1e-9, max_iter=100_000, b0=rng.normal(size=g.m), d0=rng.normal(size=g.m))
    )
    carrying = a.forward > 1e-12 * a.forward.max()
    du0 = (s0.potential[g.heads] - s0.potential[g.tails])[carrying]
    du1 = (s1.potential[g.heads] - s1.potential[g.tails])[carrying]
    assert (du0 * du1 >= -1e-9).all()
    assert np.allclose(s0.current.forward, s1.current.forward, atol=1e-6)


def test_scaled_data_recovers_the_scale():
    g, sigma, gN, J = neumann_instance(12, n=9)
    sol = solve_inverse_neumann(g, gN, 2.5 * J.abs(), AdmmConfig(tol=1e-9, max_iter=100_000))
    assert sol.lam == pytest.approx(2.5, rel=1e-7)

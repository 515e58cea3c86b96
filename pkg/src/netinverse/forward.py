"""Forward Dirichlet/Neumann voltage problems and Ohm's-law conversions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    IncompatibleDataError,
    PerfectConductorError,
    SignViolationError,
    SingularSystemError,
)
from .graph import (
    EdgeFunction,
    as_edge_function,
    check_boundary_values,
    check_vertex_function,
)
from .linalg import COMPAT_RTOL, DIRICHLET, GROUNDED, LinearSystemSpec, solve_linear


@dataclass(frozen=True, eq=False)
class Conductivity:
    """Edge conductances with explicit perfect-conductor flags.

    ``base`` holds the finite values; edges with ``perfect[e]`` set have
    infinite conductance and ``base`` is zero there.
    """

    base: EdgeFunction
    perfect: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.perfect, dtype=bool)
        if flags.shape != (self.base.graph.m,):
            raise ValueError("perfect-conductor mask must have one entry per edge")
        if (self.base.forward[flags] != 0).any():
            raise ValueError("perfect conductors must have a zero finite part")
        flags = flags.copy()
        flags.setflags(write=False)
        object.__setattr__(self, "perfect", flags)

    @classmethod
    def from_values(cls, graph, sigma):
        """Build from per-edge values (``np.inf`` marks a perfect conductor) or a dense matrix."""
        arr = np.asarray(sigma, dtype=float)
        if arr.ndim == 2:
            arr = arr[graph.heads, graph.tails]
        if arr.shape != (graph.m,):
            raise ValueError(f"expected {graph.m} conductances, got shape {arr.shape}")
        if np.isnan(arr).any() or (arr < 0).any():
            raise ValueError("conductances must be nonnegative")
        perfect = np.isinf(arr)
        finite = np.where(perfect, 0.0, arr)
        return cls(EdgeFunction.symmetric(graph, finite), perfect)

    @property
    def graph(self):
        return self.base.graph

    @property
    def values(self):
        """Per-edge conductances with ``inf`` on perfect conductors."""
        return np.where(self.perfect, np.inf, self.base.forward)

    @property
    def is_finite(self):
        return not self.perfect.any()

    def scaled(self, c):
        return Conductivity(self.base * c, self.perfect)

    def require_finite(self):
        if self.perfect.any():
            e = int(np.flatnonzero(self.perfect)[0])
            i, j = self.graph.edges[e]
            raise PerfectConductorError(f"edge ({i}, {j}) is a perfect conductor")
        return self.base.forward


def as_conductivity(graph, sigma):
    if isinstance(sigma, Conductivity):
        return sigma
    if isinstance(sigma, EdgeFunction):
        return Conductivity(as_edge_function(graph, sigma, "symmetric-nonnegative"), np.zeros(graph.m, bool))
    return Conductivity.from_values(graph, sigma)


def check_neumann_data(graph, g, rtol=COMPAT_RTOL):
    """Injected boundary currents: nonzero and summing to zero."""
    g = check_boundary_values(graph, g, "Neumann data")
    total = np.abs(g).sum()
    if total == 0:
        raise IncompatibleDataError("Neumann data must not vanish identically")
    if abs(g.sum()) > rtol * total:
        raise IncompatibleDataError(f"Neumann data must sum to zero (sum = {g.sum():.3e})")
    return g


def _support_components(graph, weights):
    on = weights > 0
    h, t = graph.heads[on], graph.tails[on]
    adj = sp.csr_matrix((np.ones(on.sum()), (h, t)), shape=(graph.n, graph.n))
    return connected_components(adj, directed=False)


def solve_dirichlet_forward(graph, sigma, f):
    """Potential with ``v = f`` on the boundary and Kirchhoff balance inside.

    Parameters
    ----------
    graph : Graph
        Network with a nonempty boundary.
    sigma : Conductivity or array_like
        Finite conductances.
    f : array_like
        Imposed voltages, ordered like ``graph.boundary``.

    Returns
    -------
    ndarray of shape (n,)
    """
    graph.require_boundary()
    sigma = as_conductivity(graph, sigma)
    w = sigma.require_finite()
    f = check_boundary_values(graph, f, "Dirichlet data")
    ncomp, labels = _support_components(graph, w)
    grounded = set(labels[list(graph.boundary)].tolist())
    if len(grounded) != ncomp:
        raise SingularSystemError("some conducting component touches no boundary vertex")
    I, Bd = graph.interior_index, graph.boundary_index
    v = np.zeros(graph.n)
    v[Bd] = f
    if len(I):
        L = graph.weighted_laplacian(w)
        L_ii = L[I][:, I]
        rhs = -(L[I][:, Bd] @ f)
        v[I] = solve_linear(LinearSystemSpec(L_ii, rhs, DIRICHLET))
    return v


def solve_neumann_forward(graph, sigma, g, ground=0):
    """Potential for injected boundary currents ``g``, normalized by ``v[ground] = 0``."""
    graph.require_boundary()
    sigma = as_conductivity(graph, sigma)
    w = sigma.require_finite()
    g = check_neumann_data(graph, g)
    if _support_components(graph, w)[0] != 1:
        raise SingularSystemError("conducting part of the network is disconnected")
    rhs = np.zeros(graph.n)
    rhs[graph.boundary_index] = g
    L = graph.weighted_laplacian(w)
    return solve_linear(LinearSystemSpec(L, rhs, GROUNDED, ground))


def current_from_potential(graph, sigma, v):
    """Ohm's law ``J_ij = sigma_ij (v_i - v_j)``.

    A perfect conductor across a zero potential drop carries a current that
    (sigma, v) cannot determine; that case raises PerfectConductorError.
    """
    sigma = as_conductivity(graph, sigma)
    v = check_vertex_function(graph, v)
    dv = v[graph.heads] - v[graph.tails]
    if sigma.perfect.any():
        if (dv[sigma.perfect] != 0).any():
            raise PerfectConductorError("perfect conductor across a nonzero potential drop")
        e = int(np.flatnonzero(sigma.perfect)[0])
        raise PerfectConductorError(
            f"current on perfect conductor {tuple(graph.edges[e])} is not determined by the potential"
        )
    return EdgeFunction.antisymmetric(graph, sigma.base.forward * dv)


def conductivity_from_pair(graph, v, J, flat_tol=0.0, zero_tol=0.0):
    """Recover ``sigma_ij = J_ij / (v_i - v_j)``.

    Edges with ``|v_i - v_j| <= flat_tol`` are flat: a current above
    ``zero_tol`` there marks a perfect conductor, otherwise sigma is zero.
    A current opposing the potential drop raises SignViolationError.
    """
    v = check_vertex_function(graph, v)
    J = as_edge_function(graph, J, "antisymmetric", "current")
    dv = v[graph.heads] - v[graph.tails]
    j = J.forward
    flat = np.abs(dv) <= flat_tol
    carrying = np.abs(j) > zero_tol
    bad = ~flat & carrying & (np.sign(j) != np.sign(dv))
    if bad.any():
        e = int(np.flatnonzero(bad)[0])
        i, k = graph.edges[e]
        raise SignViolationError(
            f"current {j[e]:.3e} opposes potential drop {dv[e]:.3e} on edge ({i}, {k})"
        )
    values = np.zeros(graph.m)
    live = ~flat & carrying
    values[live] = j[live] / dv[live]
    perfect = flat & carrying
    return Conductivity(EdgeFunction.symmetric(graph, values), perfect)

"""Random walks equivalent to resistor networks.

A walker at ``i`` steps to ``j`` with probability ``sigma_ij / sigma_i``.
Entering at ``Gamma_a`` and absorbed at ``Gamma_b``, its expected net number
of ``i -> j`` steps equals the current for unit injected flux.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import GraphError, InfeasibleDesignError, PerfectConductorError, SignViolationError
from .forward import Conductivity, as_conductivity, current_from_potential, solve_neumann_forward
from .graph import ANTISYMMETRIC, EdgeFunction, Graph, as_edge_function, vertex_flux
from .inverse import AdmmConfig, InverseSolution, rescale_to_unit_flux, separate_levels, solve_inverse_neumann

STEP_CAP = 10**7


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix supported on the graph's edges.

    Rows of absorbing vertices, and of vertices with no conducting edge
    (``isolated``), may be zero.
    """

    graph: Graph
    P: sp.csr_matrix
    absorbing: tuple = ()
    isolated: tuple = ()

    def __post_init__(self):
        P = sp.csr_matrix(self.P)
        if P.shape != (self.graph.n, self.graph.n):
            raise ValueError(f"transition matrix must be {self.graph.n}x{self.graph.n}")
        if P.nnz and (P.data.min() < 0 or P.data.max() > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        rows = np.asarray(P.sum(axis=1)).ravel()
        free = np.ones(self.graph.n, dtype=bool)
        free[list(self.absorbing) + list(self.isolated)] = False
        if np.abs(rows[free] - 1).max(initial=0.0) > 1e-12:
            raise ValueError("rows of non-absorbing vertices must sum to one")
        object.__setattr__(self, "P", P)

    def to_dense(self):
        return self.P.toarray()

    def with_absorbing(self, absorbing):
        return TransitionMatrix(self.graph, self.P, tuple(int(i) for i in absorbing), self.isolated)


def transitions_from_conductivity(graph, sigma, absorbing=(), allow_isolated=False):
    """``P_ij = sigma_ij / sigma_i`` with ``sigma_i = sum_j sigma_ij``."""
    sigma = as_conductivity(graph, sigma)
    if not sigma.is_finite:
        raise PerfectConductorError("transition probabilities need finite conductances")
    w = sigma.base.forward
    W = sp.csr_matrix(
        (np.r_[w, w], (np.r_[graph.heads, graph.tails], np.r_[graph.tails, graph.heads])),
        shape=(graph.n, graph.n),
    )
    W.eliminate_zeros()
    total = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.flatnonzero(total == 0)
    if len(isolated) and not allow_isolated:
        raise GraphError(f"vertex {int(isolated[0])} has no conducting edge")
    # divide rather than scale by 1/total: each entry is then the correctly
    # rounded ratio, so exactly representable rescalings give identical bits
    P = W.tocsr()
    P.data = P.data / np.repeat(total, np.diff(P.indptr))
    return TransitionMatrix(graph, P, tuple(int(i) for i in absorbing), tuple(isolated.tolist()))


@dataclass
class Design:
    transitions: TransitionMatrix
    sigma: Conductivity
    lam: float
    solution: InverseSolution
    residual: float


def _boundary_flux(graph, W, entry, exit_):
    flux = vertex_flux(graph, W)
    scale = max(1.0, float(np.abs(W.forward).max(initial=0.0)))
    inside = np.ones(graph.n, dtype=bool)
    inside[list(entry) + list(exit_)] = False
    leak = np.abs(flux[inside]).max(initial=0.0)
    if leak > 1e-9 * scale:
        raise InfeasibleDesignError(f"net passages leak {leak:.3e} at a vertex outside entry and exit")
    return flux


def _forward_on_support(graph, sigma, g):
    """Neumann forward solve restricted to the conducting part of the network."""
    w = sigma.require_finite()
    on = w > 0
    verts = np.unique(np.r_[graph.heads[on], graph.tails[on], graph.boundary_index])
    relabel = np.full(graph.n, -1)
    relabel[verts] = np.arange(len(verts))
    sub_edges = np.c_[relabel[graph.heads[on]], relabel[graph.tails[on]]]
    try:
        sub = Graph(len(verts), sub_edges, tuple(relabel[list(graph.boundary)].tolist()))
    except GraphError as exc:
        raise InfeasibleDesignError(f"conducting part of the design is not connected: {exc}") from None
    vals = np.zeros(sub.m)
    for (i, j), s in zip(sub_edges.tolist(), w[on].tolist()):
        vals[sub.edge_index[(i, j)]] = s
    v_sub = solve_neumann_forward(sub, vals, g)
    J_sub = current_from_potential(sub, vals, v_sub)
    J = np.zeros(graph.m)
    for e in np.flatnonzero(on):
        i, j = relabel[graph.heads[e]], relabel[graph.tails[e]]
        J[e] = J_sub[(int(i), int(j))]
    return J


def design_transitions(graph, W, entry, exit, entry_probs=None, cfg=None, relative=False):
    """Find a transition matrix whose walks have expected net passages ``W``.

    Parameters
    ----------
    graph : Graph
    W : EdgeFunction or array_like
        Antisymmetric net passages (dense matrix or values on edges ``i < j``).
    entry, exit : sequence of int
        Disjoint entry set ``Gamma_a`` and absorbing set ``Gamma_b``.
    entry_probs : array_like, optional
        Entry distribution on ``entry``; must match the outflow of ``W``.
    cfg : AdmmConfig, optional
    relative : bool
        ``W`` is known only up to a positive factor. The unit-flux rescale is
        skipped and the recovered scale is reported as ``lam``.
    """
    entry = tuple(int(i) for i in entry)
    exit = tuple(int(i) for i in exit)
    if not entry or not exit:
        raise ValueError("entry and exit sets must be nonempty")
    if set(entry) & set(exit):
        raise ValueError("entry and exit sets must be disjoint")
    W = as_edge_function(graph, W, ANTISYMMETRIC, "net passages")
    flux = _boundary_flux(graph, W, entry, exit)
    gb = graph.with_boundary(entry + exit)
    g = flux[list(entry + exit)]
    inflow = g[: len(entry)].sum()
    if not relative and abs(inflow - 1.0) > 1e-9:
        raise InfeasibleDesignError(f"entry outflow sums to {inflow:.12g}, expected 1")
    if not inflow > 0:
        raise InfeasibleDesignError("net passages carry no flow from entry to exit")
    if entry_probs is not None:
        p = np.asarray(entry_probs, dtype=float)
        if p.shape != (len(entry),) or np.abs(g[: len(entry)] - inflow * p).max() > 1e-9 * inflow:
            raise InfeasibleDesignError("entry probabilities do not match the outflow of the net passages")
    # walkers inject one unit in total; in relative mode the unknown factor
    # stays in the measurement |W| and comes back as lam
    g = g / inflow
    cfg = cfg or AdmmConfig(tol=1e-9, max_iter=200_000)
    sol = solve_inverse_neumann(gb, g, W.abs(), cfg)
    if sol.report.degenerate:
        raise InfeasibleDesignError("recovered scale is zero")
    if sol.conductivity is None or sol.conductivity.perfect.any():
        try:
            sol = separate_levels(gb, sol, W.abs(), neumann=g, tol=cfg.tol)
        except (PerfectConductorError, SignViolationError) as exc:
            raise InfeasibleDesignError(f"no transition matrix realizes these passages: {exc}") from None
    lam = sol.report.lam
    if not relative:
        sol = rescale_to_unit_flux(sol)
    sigma = sol.conductivity
    J = _forward_on_support(gb, sigma, g)
    # the forward current for flux g does not depend on the scale of sigma
    residual = float(np.linalg.norm(J - W.forward / inflow)) / float(np.linalg.norm(W.forward / inflow))
    if residual > 1e-6:
        raise InfeasibleDesignError(f"designed network reproduces the passages only to {residual:.2e}")
    P = transitions_from_conductivity(graph, sigma, absorbing=exit, allow_isolated=True)
    return Design(P, sigma, lam, sol, residual)


@dataclass
class PassageEstimate:
    mean: EdgeFunction
    stderr: np.ndarray
    walkers: int
    seed: int
    max_steps: int


def _check_reachability(P, starts, absorbing):
    n = P.shape[0]
    A = P.copy()
    A.data = (A.data > 0).astype(float)
    mask = np.zeros(n, dtype=bool)
    mask[list(absorbing)] = True
    # walks stop on absorption, so drop absorbing rows before the search
    keep = sp.diags((~mask).astype(float)) @ A
    seen = np.zeros(n, dtype=bool)
    for s in starts:
        seen[breadth_first_order(keep, s, directed=True, return_predecessors=False)] = True
    back = np.zeros(n, dtype=bool)
    rev = keep.T.tocsr()
    for t in absorbing:
        back[breadth_first_order(rev, t, directed=True, return_predecessors=False)] = True
    stuck = seen & ~back
    if stuck.any():
        raise GraphError(f"vertex {int(np.flatnonzero(stuck)[0])} is reachable from the entry but cannot reach the exit")


def simulate_net_passages(tm, entry, entry_probs, exit, walkers, seed=0, batch=5000, step_cap=STEP_CAP):
    """Monte-Carlo mean and standard error of net passages per walk.

    Walkers start at ``entry`` (drawn from ``entry_probs``), move by ``tm.P``
    and are absorbed only on ``exit``; returning to the entry does not end
    a walk. Batch ``k`` draws from the ``k``-th Philox stream spawned from
    ``seed``, so a given ``(seed, walkers, batch)`` always reproduces.
    """
    graph = tm.graph
    entry = np.asarray(entry, dtype=np.int64)
    probs = np.asarray(entry_probs, dtype=float)
    if probs.shape != entry.shape or (probs < 0).any() or abs(probs.sum() - 1) > 1e-12:
        raise ValueError("entry probabilities must be a distribution over the entry set")
    walkers = int(walkers)
    if walkers < 1:
        raise ValueError("need at least one walker")
    absorbing = np.zeros(graph.n, dtype=bool)
    absorbing[list(exit)] = True
    P = tm.P.tocsr()
    P.sort_indices()
    _check_reachability(P, entry[probs > 0].tolist(), list(exit))

    indptr, indices = P.indptr, P.indices
    row_of = np.repeat(np.arange(graph.n), np.diff(indptr))
    cum = np.zeros(P.nnz)
    for i in range(graph.n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi > lo:
            c = np.cumsum(P.data[lo:hi])
            c[-1] = 1.0
            cum[lo:hi] = c
    # row r occupies (r, r + 1] so one searchsorted serves every vertex
    keys = row_of + cum
    edge_of = np.array([graph.edge_index[(int(i), int(j))] for i, j in zip(row_of, indices)], dtype=np.int64)
    sign_of = np.where(row_of < indices, 1.0, -1.0)

    m = graph.m
    total = np.zeros(m)
    total_sq = np.zeros(m)
    max_steps = 0
    nbatch = -(-walkers // batch)
    streams = np.random.SeedSequence(seed).spawn(nbatch)
    for b, ss in enumerate(streams):
        size = min(batch, walkers - b * batch)
        rng = np.random.Generator(np.random.Philox(ss))
        pos = entry[rng.choice(len(entry), size=size, p=probs)]
        counts = np.zeros((size, m))
        live = np.flatnonzero(~absorbing[pos])
        steps = 0
        while live.size:
            steps += 1
            if steps > step_cap:
                raise RuntimeError(f"walk exceeded {step_cap} steps without absorption")
            here = pos[live]
            k = np.searchsorted(keys, here + rng.random(live.size), side="right")
            np.add.at(counts, (live, edge_of[k]), sign_of[k])
            pos[live] = indices[k]
            live = live[~absorbing[pos[live]]]
        max_steps = max(max_steps, steps)
        total += counts.sum(axis=0)
        total_sq += (counts**2).sum(axis=0)
    mean = total / walkers
    var = np.maximum(total_sq / walkers - mean**2, 0.0)
    stderr = np.sqrt(var / max(walkers - 1, 1))
    return PassageEstimate(EdgeFunction.antisymmetric(graph, mean), stderr, walkers, int(seed), max_steps)


class TransitionDesigner(BaseEstimator):
    """Estimator wrapper: ``fit(graph, W, entry, exit)`` then ``simulate(walkers)``.

    Fitted attributes: ``transitions_``, ``conductivity_``, ``lam_``,
    ``residual_``.
    """

    def __init__(self, alpha=1.0, tol=1e-9, max_iter=200_000, relative=False):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.relative = relative

    def fit(self, graph, W, entry, exit, entry_probs=None):
        cfg = AdmmConfig(alpha=self.alpha, tol=self.tol, max_iter=self.max_iter)
        d = design_transitions(graph, W, entry, exit, entry_probs, cfg, relative=self.relative)
        flux = vertex_flux(graph, as_edge_function(graph, W, ANTISYMMETRIC))[list(entry)]
        self.entry_ = tuple(int(i) for i in entry)
        self.entry_probs_ = flux / flux.sum()
        self.exit_ = tuple(int(i) for i in exit)
        self.transitions_ = d.transitions
        self.conductivity_ = d.sigma
        self.lam_ = d.lam
        self.residual_ = d.residual
        return self

    def simulate(self, walkers, seed=0):
        check_is_fitted(self, "transitions_")
        return simulate_net_passages(self.transitions_, self.entry_, self.entry_probs_, self.exit_, walkers, seed)

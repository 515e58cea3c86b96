"""Several boundary measurements against one conductivity.

Each dataset is solved on its own; the coupling term compares the edge
resistances ``|u_i - u_j| / a_ij`` that the datasets imply.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import IncompatibleDataError
from .forward import Conductivity, check_neumann_data
from .graph import EdgeFunction, check_boundary_values, check_measurement, check_vertex_function, energy
from .inverse import AdmmConfig, solve_inverse_dirichlet, solve_inverse_neumann

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class Dataset:
    """One measurement: a boundary, its voltages or injected currents, and ``a``."""

    boundary: tuple
    mode: str
    values: np.ndarray
    a: object

    def __post_init__(self):
        if self.mode not in (DIRICHLET, NEUMANN):
            raise ValueError(f"mode must be 'dirichlet' or 'neumann', got {self.mode!r}")


@dataclass(frozen=True)
class MeasurementSet:
    datasets: tuple

    def __post_init__(self):
        ds = tuple(self.datasets)
        if len(ds) < 2:
            raise ValueError(f"a measurement set needs at least two datasets, got {len(ds)}")
        object.__setattr__(self, "datasets", ds)

    def __len__(self):
        return len(self.datasets)

    def prepared(self, graph):
        """Per-dataset ``(graph_l, values_l, a_l)`` with validated data."""
        out = []
        for d in self.datasets:
            gl = graph.with_boundary(d.boundary)
            if d.mode == DIRICHLET:
                vals = check_boundary_values(gl, d.values, "Dirichlet data")
            else:
                vals = check_neumann_data(gl, d.values)
            out.append((gl, vals, check_measurement(gl, d.a)))
        return out


def _floored(graph, a, zero_rtol):
    a = check_measurement(graph, a).forward
    return np.where(a > zero_rtol * a.max(initial=0.0), a, 0.0)


def _ratios(graph, u, a, zero_rtol=0.0):
    u = check_vertex_function(graph, u)
    return np.abs(u[graph.heads] - u[graph.tails]), _floored(graph, a, zero_rtol)


def coupling_phi(graph, us, as_, zero_rtol=0.0):
    """Sum over ordered pairs in ``C^l`` of ``(|Du^1|/a^1 - |Du^l|/a^l)^2``, ``l >= 2``.

    ``C^l`` is the set of edges where both ``a^1`` and ``a^l`` are nonzero.
    Each undirected edge counts twice (once per orientation). Entries at
    or below ``zero_rtol * max(a)`` count as zero, which keeps round-off
    in measured magnitudes out of the ratios.
    """
    if len(us) != len(as_):
        raise ValueError("need one measurement matrix per potential")
    du1, a1 = _ratios(graph, us[0], as_[0], zero_rtol)
    total = 0.0
    for u, a in zip(us[1:], as_[1:]):
        dul, al = _ratios(graph, u, a, zero_rtol)
        C = (a1 != 0) & (al != 0)
        diff = du1[C] / a1[C] - dul[C] / al[C]
        total += 2.0 * float(diff @ diff)
    return total


def coupling_phi_dense(us, as_):
    """Reference evaluation of :func:`coupling_phi` over full ``n x n`` matrices."""
    u1 = np.asarray(us[0], dtype=float)
    A1 = np.asarray(as_[0], dtype=float)
    G1 = np.abs(u1[:, None] - u1[None, :])
    total = 0.0
    for u, A in zip(us[1:], as_[1:]):
        u = np.asarray(u, dtype=float)
        A = np.asarray(A, dtype=float)
        G = np.abs(u[:, None] - u[None, :])
        n = len(u)
        for i in range(n):
            for j in range(n):
                if A1[i, j] != 0 and A[i, j] != 0:
                    total += (G1[i, j] / A1[i, j] - G[i, j] / A[i, j]) ** 2
    return total


def check_admissible(graph, u, dataset, atol=1e-9):
    gl = graph.with_boundary(dataset.boundary)
    u = check_vertex_function(gl, u)
    if dataset.mode == DIRICHLET:
        f = check_boundary_values(gl, dataset.values, "Dirichlet data")
        gap = np.abs(u[gl.boundary_index] - f).max(initial=0.0)
        if gap > atol * max(1.0, np.abs(f).max(initial=0.0)):
            raise IncompatibleDataError(f"potential misses the Dirichlet data by {gap:.3e}")
    else:
        g = check_neumann_data(gl, dataset.values)
        s = float(u[gl.boundary_index] @ g)
        if abs(s - 1.0) > atol:
            raise IncompatibleDataError(f"potential has sum u.g = {s:.12g}, expected 1")


def total_functional(graph, us, mset):
    """Sum of per-dataset energies plus the coupling term."""
    if len(us) != len(mset):
        raise ValueError("need one potential per dataset")
    for u, d in zip(us, mset.datasets):
        check_admissible(graph, u, d)
    as_ = [check_measurement(graph, d.a) for d in mset.datasets]
    return sum(energy(a, u) for a, u in zip(as_, us)) + coupling_phi(graph, us, as_)


def phi_tolerance(tol):
    return max(1e-8, 100.0 * tol**2)


ZERO_RTOL = 1e-10
SLACK_RTOL = 1e-6
# smallest resistance relative to the largest below which agreement is
# only reached in the perfect-conductor limit
SEPARATION_RTOL = 1e-6


@dataclass
class ConsistencyResult:
    consistent: bool
    phi: float
    sigma: Conductivity | None
    determined: np.ndarray | None
    potentials: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    phi_raw: float = float("nan")
    reason: str = ""
    scales: list = field(default_factory=list)
    separation: float = 0.0


def _solve(gl, d, vals, a, cfg):
    if d.mode == DIRICHLET:
        return solve_inverse_dirichlet(gl, vals, a, cfg)
    return solve_inverse_neumann(gl, vals, a, cfg)


def select_minimizers(graph, prepared, modes, solutions, zero_rtol=ZERO_RTOL, slack_rtol=SLACK_RTOL):
    """Pick one minimizer per dataset so the resistances agree as well as possible.

    Given the recovered current ``J^l``, the minimizers of dataset ``l``
    are the admissible potentials that fall along ``J^l`` on every edge
    carrying current and stay flat where ``|J^l| < a^l``. Over the product
    of these polyhedra, a linear program minimizes the sum of
    ``||Du^1|/a^1 - |Du^l|/a^l|`` over the shared support. Neumann
    potentials may be rescaled by a positive factor in the process.

    Returns the potentials (None if the program fails) and the smallest
    resistance ``|Du|/a`` over current-carrying edges that a second
    program reaches without giving up agreement; zero means every optimal
    choice needs a perfect conductor.
    """
    n, m = graph.n, graph.m
    B = graph.incidence
    # Neumann potentials are normalized by sum_B u g = 1, which hides each
    # dataset's physical scale; only one Neumann dataset keeps that
    # normalization, and none does when a Dirichlet dataset fixes the scale
    anchor = None if DIRICHLET in modes else modes.index(NEUMANN)
    blocks, offsets = [], [0]
    for (gl, vals, a), mode, sol in zip(prepared, modes, solutions):
        if mode == DIRICHLET:
            free = gl.interior_index
            fixed = np.zeros(n)
            fixed[gl.boundary_index] = vals
        else:
            free = np.arange(n)
            fixed = np.zeros(n)
        blocks.append((free, fixed, sol.current.forward, _floored(gl, a, zero_rtol)))
        offsets.append(offsets[-1] + len(free))
    N = offsets[-1]
    ub_rows, ub_rhs, eq_rows, eq_rhs, maps = [], [], [], [], []
    sep_rows, sep_rhs = [], []
    for k, ((free, fixed, J, a), mode) in enumerate(zip(blocks, modes)):
        # edge drops of dataset k as M @ x + c
        M = sp.hstack([sp.csr_matrix((m, offsets[k])), B[:, free], sp.csr_matrix((m, N - offsets[k + 1]))]).tocsr()
        c = B @ fixed
        s = np.sign(J)
        carrying = (a > 0) & (np.abs(J) > 0)
        flat = (a > 0) & (np.abs(J) < a * (1 - slack_rtol))
        ub_rows.append(-(sp.diags(s[carrying]) @ M[carrying]))
        ub_rhs.append(s[carrying] * c[carrying])
        inv_a = 1.0 / a[carrying]
        sep_rows.append(sp.diags(inv_a) @ ub_rows[-1])
        sep_rhs.append(inv_a * ub_rhs[-1])
        eq_rows.append(M[flat])
        eq_rhs.append(-c[flat])
        if mode == NEUMANN:
            gl, vals, _ = prepared[k]
            row = np.zeros(N)
            row[offsets[k] + gl.boundary_index] = vals
            if k == anchor:
                eq_rows.append(sp.csr_matrix(row))
                eq_rhs.append(np.ones(1))
            else:
                # free positive scale: sum_B u g >= 0
                ub_rows.append(sp.csr_matrix(-row))
                ub_rhs.append(np.zeros(1))
        maps.append((M, c, s, a))
    M1, c1, s1, a1 = maps[0]
    R_parts, r_parts = [], []
    for M, c, s, a in maps[1:]:
        C = np.flatnonzero((a1 > 0) & (a > 0))
        R_parts.append(sp.diags(s1[C] / a1[C]) @ M1[C] - sp.diags(s[C] / a[C]) @ M[C])
        r_parts.append(s1[C] * c1[C] / a1[C] - s[C] * c[C] / a[C])
    R = sp.vstack(R_parts).tocsr()
    r = np.concatenate(r_parts)
    K = R.shape[0]
    # minimize sum t subject to -t <= R x + r <= t
    G = sp.vstack(ub_rows).tocsr()
    A_ub = sp.vstack(
        [
            sp.hstack([G, sp.csr_matrix((G.shape[0], K))]),
            sp.hstack([R, -sp.eye(K)]),
            sp.hstack([-R, -sp.eye(K)]),
        ]
    ).tocsr()
    b_ub = np.concatenate([np.concatenate(ub_rhs), -r, r])
    E = sp.vstack(eq_rows).tocsr()
    A_eq = sp.hstack([E, sp.csr_matrix((E.shape[0], K))]).tocsr()
    b_eq = np.concatenate(eq_rhs)
    eq = dict(A_eq=A_eq, b_eq=b_eq) if A_eq.shape[0] else {}
    res = linprog(
        np.r_[np.zeros(N), np.ones(K)],
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * N + [(0, None)] * K,
        method="highs",
        **eq,
    )
    if res.status != 0:
        return None, 0.0
    x = res.x[:N]
    tau = 0.0
    # second pass: among the optimal points, push every current-carrying
    # edge's resistance |Du|/a above a common floor, so no edge is left
    # flat (a perfect conductor) when a separated optimum exists
    budget = res.fun + 1e-9 * max(1.0, res.fun)
    S = sp.vstack(sep_rows).tocsr()
    A2 = sp.vstack(
        [
            sp.hstack([A_ub, sp.csr_matrix((A_ub.shape[0], 1))]),
            sp.hstack([S, sp.csr_matrix((S.shape[0], K)), sp.csr_matrix(np.ones((S.shape[0], 1)))]),
            sp.csr_matrix(np.r_[np.zeros(N), np.ones(K), 0.0]),
        ]
    ).tocsr()
    b2 = np.concatenate([b_ub, np.concatenate(sep_rhs), [budget]])
    eq2 = dict(A_eq=sp.hstack([A_eq, sp.csr_matrix((A_eq.shape[0], 1))]).tocsr(), b_eq=b_eq) if eq else {}
    res2 = linprog(
        np.r_[np.zeros(N + K), -1.0],
        A_ub=A2,
        b_ub=b2,
        bounds=[(None, None)] * N + [(0, None)] * K + [(0, 1e12)],
        method="highs",
        **eq2,
    )
    if res2.status == 0 and res2.x[-1] > 0:
        x = res2.x[:N]
        tau = float(res2.x[-1])
    out = []
    for k, (free, fixed, _, _) in enumerate(blocks):
        u = fixed.copy()
        u[free] = x[offsets[k] : offsets[k + 1]]
        out.append(u)
    return out, tau


def merge_conductivity(graph, potentials, as_, tol, rtol=1e-4, zero_rtol=ZERO_RTOL):
    """Combine per-dataset conductivity estimates edge by edge.

    An edge is determined by any dataset that measures current on it and
    whose potential drop there exceeds ``tol`` (scaled by that potential's
    size). Estimates from different
    datasets must agree to ``rtol`` relative; otherwise ``None`` is
    returned with a message. Edges that stay flat while carrying current
    in every dataset are perfect conductors.
    """
    m = graph.m
    est = np.full((len(potentials), m), np.nan)
    carries = np.zeros(m, dtype=bool)
    for k, (u, a) in enumerate(zip(potentials, as_)):
        a = _floored(graph, a, zero_rtol)
        du = np.abs(u[graph.heads] - u[graph.tails])
        # a zero magnitude says nothing about sigma once minimizers are not unique
        live = (du > tol * max(1.0, float(np.abs(u).max(initial=0.0)))) & (a > 0)
        est[k, live] = a[live] / du[live]
        carries |= a > 0
    determined = ~np.isnan(est).all(axis=0)
    filled = np.where(np.isnan(est), 0.0, est)
    hi = filled.max(axis=0)
    lo = np.where(np.isnan(est), np.inf, est).min(axis=0)
    spread = determined & (hi - lo > rtol * hi)
    if spread.any():
        e = int(np.flatnonzero(spread)[0])
        i, j = graph.edges[e]
        return None, determined, f"conductivity estimates disagree on edge ({i}, {j}): {lo[e]:.6g} vs {hi[e]:.6g}"
    counts = np.maximum((~np.isnan(est)).sum(axis=0), 1)
    values = np.where(determined, filled.sum(axis=0) / counts, 0.0)
    perfect = carries & ~determined
    return Conductivity(EdgeFunction.symmetric(graph, values), perfect), determined, ""


def consistency_check(graph, mset, cfg=None, rtol=1e-4):
    """Decide whether all datasets come from one conductivity.

    Each dataset is solved on its own. Since potentials are generally not
    unique, :func:`select_minimizers` then picks, within each dataset's
    minimizer set, the potentials whose resistances agree best, and the
    coupling term is evaluated there.

    Neumann potentials are compared up to a positive factor each, reported
    in ``scales`` as ``sum_B u g``. With Dirichlet data present the merged
    conductivity is absolute; from Neumann data alone it is known up to
    one overall factor and is expressed in the first dataset's
    normalization.

    Agreement counts only if it leaves every current-carrying edge with a
    finite conductance: ``separation``, the smallest selected resistance
    relative to the largest, must exceed ``SEPARATION_RTOL``. Otherwise
    free Neumann scales could match any data by collapsing potentials.
    """
    cfg = cfg or AdmmConfig(tol=1e-9, max_iter=200_000)
    prepared = mset.prepared(graph)
    modes = [d.mode for d in mset.datasets]
    sols = [_solve(gl, d, vals, a, cfg) for (gl, vals, a), d in zip(prepared, mset.datasets)]
    as_ = [a for _, _, a in prepared]
    phi_raw = coupling_phi(graph, [s.potential for s in sols], as_, ZERO_RTOL)
    us, tau = select_minimizers(graph, prepared, modes, sols)
    tol_phi = phi_tolerance(cfg.tol)
    if us is None:
        return ConsistencyResult(False, phi_raw, None, None, [], sols, phi_raw, "minimizer selection failed", [])
    phi = coupling_phi(graph, us, as_, ZERO_RTOL)
    scales = [
        float(u[gl.boundary_index] @ vals) if mode == NEUMANN else 1.0
        for u, (gl, vals, _), mode in zip(us, prepared, modes)
    ]
    du1, a1 = _ratios(graph, us[0], as_[0], ZERO_RTOL)
    top = float((du1[a1 > 0] / a1[a1 > 0]).max(initial=0.0))
    sep = tau / top if top > 0 else 0.0
    out = ConsistencyResult(False, phi, None, None, us, sols, phi_raw, "", scales, sep)
    if phi > tol_phi:
        out.reason = f"coupling {phi:.3e} above {tol_phi:.1e}"
        return out
    if sep <= SEPARATION_RTOL:
        out.reason = "datasets agree only if some current-carrying edges are perfect conductors"
        return out
    out.sigma, out.determined, out.reason = merge_conductivity(graph, us, as_, cfg.tol, rtol)
    out.consistent = out.sigma is not None
    return out

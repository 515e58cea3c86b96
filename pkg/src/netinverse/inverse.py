"""Weighted l1 least-gradient solvers recovering currents from their magnitudes.

Both solvers run the alternating split Bregman iteration (equivalently,
Douglas-Rachford splitting on the dual problem): an unweighted Laplacian
solve for the potential, an entrywise soft threshold, and a Bregman update.
Iterates ``b``, ``d`` are antisymmetric edge functions and are stored as
their values on edges ``i < j``; the ordered-pair norms of the full
``n x n`` matrices are ``sqrt(2)`` times the per-edge norms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DegenerateDataError,
    NonConvergenceWarning,
    PerfectConductorError,
    SignViolationError,
)
from .forward import (
    Conductivity,
    check_neumann_data,
    conductivity_from_pair,
    current_from_potential,
    solve_dirichlet_forward,
    solve_neumann_forward,
)
from .graph import (
    ANTISYMMETRIC,
    EdgeFunction,
    as_edge_function,
    check_boundary_values,
    check_measurement,
    divergence,
    energy,
    vertex_flux,
)
from .linalg import SPDSolver

_SQRT2 = np.sqrt(2.0)
# stop only once |I(u) - dual value| <= GAP_FACTOR * tol * max(1, I(u))
GAP_FACTOR = 10.0


@dataclass(frozen=True)
class AdmmConfig:
    """Penalty, stopping tolerance, iteration cap, and optional warm start.

    ``b0`` and ``d0`` are antisymmetric edge functions (or per-edge values
    on ``i < j``); both default to zero.
    """

    alpha: float = 1.0
    tol: float = 1e-6
    max_iter: int = 50_000
    b0: object = None
    d0: object = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")

    def initial(self, graph):
        out = []
        for x in (self.b0, self.d0):
            if x is None:
                out.append(np.zeros(graph.m))
            else:
                out.append(as_edge_function(graph, x, ANTISYMMETRIC, "initial iterate").forward.copy())
        return out


@dataclass
class SolveReport:
    iterations: int
    history: np.ndarray
    residuals: np.ndarray
    primal: float
    dual: float
    gap: float
    converged: bool
    lam: float | None = None
    flux_fit_residual: float | None = None
    interior_flux: float = 0.0
    degenerate: bool = False
    perfect_edges: int = 0
    residual_scale: float = 1.0
    gaps: np.ndarray | None = None
    notes: list = field(default_factory=list)

    def stop_iteration(self, tol):
        """First iteration at which the stopping rule holds for ``tol``, else None.

        The iteration is deterministic, so for ``tol`` no smaller than the
        one the run used this is where a run at ``tol`` would have stopped.
        """
        ok = (self.history < tol) & (self.residuals < tol * self.residual_scale)
        if self.gaps is not None:
            ok &= self.gaps <= GAP_FACTOR * tol
        hit = np.flatnonzero(ok)
        return int(hit[0]) + 1 if hit.size else None


@dataclass
class InverseSolution:
    potential: np.ndarray
    current: EdgeFunction
    conductivity: Conductivity | None
    report: SolveReport

    @property
    def lam(self):
        return self.report.lam


def soft_threshold(w, t):
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


def shrink_d(w, a, alpha, lift):
    """Closed-form d-update.

    ``max(|w| - a/(2 alpha), 0) * w/|w| - lift`` entrywise, and ``-lift``
    where ``w == 0``. Accepts arrays or EdgeFunctions (matched kinds).
    """
    if isinstance(w, EdgeFunction):
        a_fw = a.forward if isinstance(a, EdgeFunction) else np.asarray(a)
        a_bw = a.backward if isinstance(a, EdgeFunction) else np.asarray(a)
        l_fw = lift.forward if isinstance(lift, EdgeFunction) else np.asarray(lift)
        l_bw = lift.backward if isinstance(lift, EdgeFunction) else np.asarray(lift)
        fw = soft_threshold(w.forward, a_fw / (2 * alpha)) - l_fw
        bw = soft_threshold(w.backward, a_bw / (2 * alpha)) - l_bw
        kind = ANTISYMMETRIC if np.array_equal(fw, -bw) else "general"
        return EdgeFunction(w.graph, fw, bw, kind)
    w = np.asarray(w, dtype=float)
    return soft_threshold(w, np.asarray(a, dtype=float) / (2 * alpha)) - np.asarray(lift, dtype=float)


def lift_dirichlet(graph, f):
    """``f`` on the boundary, zero inside."""
    graph.require_boundary()
    f = check_boundary_values(graph, f, "Dirichlet data")
    u = np.zeros(graph.n)
    u[graph.boundary_index] = f
    return u


@dataclass(frozen=True, eq=False)
class NeumannLift:
    """``v_g`` with ``sum_B v_g g = 1`` and the unit-flux potential ``z``."""

    v_g: np.ndarray
    z: np.ndarray
    denom: float
    h: np.ndarray


def build_lift_neumann(graph, g, ground=0, solver=None):
    """Unit-flux potential ``z`` (``z[ground] = 0``) and the lift ``v_g = h/|g|^2``."""
    graph.require_boundary()
    g = check_neumann_data(graph, g)
    h = np.zeros(graph.n)
    h[graph.boundary_index] = g
    if solver is None:
        solver = _grounded_solver(graph, ground)
    z = _grounded_solve(solver, h, ground)
    denom = float(h @ z)
    if not denom > 0:
        raise DegenerateDataError(f"unit-flux system gave nonpositive sum z.g = {denom:.3e}")
    return NeumannLift(h / float(g @ g), z, denom, h)


def _grounded_solver(graph, ground):
    keep = np.delete(np.arange(graph.n), ground)
    L = graph.laplacian
    return SPDSolver(L[keep][:, keep]), keep


def _grounded_solve(solver, rhs, ground):
    spd, keep = solver
    out = np.zeros(len(keep) + 1)
    out[keep] = spd.solve(rhs[keep])
    return out


def _div_half(graph, b, d):
    # right-hand side 1/2 [div b - div d] for arbitrary edge functions
    return 0.5 * (divergence(graph, b) - divergence(graph, d))


def step_u_dirichlet(graph, b, d):
    """Potential update: unweighted Laplacian balance inside, zero on the boundary."""
    graph.require_boundary()
    rhs = _div_half(graph, b, d)
    I = graph.interior_index
    u = np.zeros(graph.n)
    if len(I):
        L = graph.laplacian
        u[I] = SPDSolver(L[I][:, I]).solve(rhs[I])
    return u


def step_u_neumann(graph, b, d, lift, g=None, ground=0):
    """Potential update projected onto ``{u : sum_B u_i g_i = 0}``.

    Solves the all-vertex system with ``u[ground] = 0`` then adds
    ``beta * z`` with ``beta = -(u.h)/(z.h)``.
    """
    if g is not None:
        check_neumann_data(graph, g)
    rhs = _div_half(graph, b, d)
    u = _grounded_solve(_grounded_solver(graph, ground), rhs, ground)
    beta = -float(lift.h @ u) / lift.denom
    return u + beta * lift.z


class _Splitting:
    """Shared iteration loop; subclasses supply the potential update."""

    def __init__(self, graph, a, alpha):
        self.graph = graph
        self.a = a
        self.alpha = float(alpha)
        self.B = graph.incidence
        self.Bt = self.B.T.tocsr()
        self.threshold = a / (2.0 * self.alpha)
        self.scale = max(1.0, _SQRT2 * float(np.linalg.norm(a)))

    def u_step(self, c):
        raise NotImplementedError

    def relative_gap(self, Du_tot, J):
        """Primal energy against the boundary-flux value of the current, relative."""
        raise NotImplementedError

    def run(self, cfg, lift_vertex):
        lift = self.B @ lift_vertex
        b, d = cfg.initial(self.graph)
        u_prev = np.zeros(self.graph.n)
        tol, thr, B = cfg.tol, self.threshold, self.B
        history = np.empty(cfg.max_iter)
        residuals = np.empty(cfg.max_iter)
        gaps = np.empty(cfg.max_iter)
        two_alpha = 2.0 * self.alpha
        converged = False
        k = 0
        for k in range(1, cfg.max_iter + 1):
            u = self.u_step(b - d)
            Du = B @ u
            w = Du + lift + b
            d = np.sign(w) * np.maximum(np.abs(w) - thr, 0.0) - lift
            r = Du - d
            b = b + r
            du = np.linalg.norm(u - u_prev) / max(1.0, np.linalg.norm(u_prev))
            res = _SQRT2 * np.linalg.norm(r)
            history[k - 1] = du
            residuals[k - 1] = res
            gap = self.relative_gap(Du + lift, two_alpha * b)
            gaps[k - 1] = gap
            u_prev = u
            # progress and feasibility alone can stop early with a loose
            # duality gap, so the gap is part of the rule
            if du < tol and res < tol * self.scale and gap <= GAP_FACTOR * tol:
                converged = True
                break
        return u_prev, b, d, converged, history[:k].copy(), residuals[:k].copy(), gaps[:k].copy()


class _DirichletSplitting(_Splitting):
    def __init__(self, graph, a, alpha):
        super().__init__(graph, a, alpha)
        I = graph.interior_index
        self.I = I
        L = graph.laplacian
        self.solver = SPDSolver(L[I][:, I]) if len(I) else None
        self.BtI = self.Bt[I]
        self.BtB = self.Bt[graph.boundary_index]
        self.f = None

    def relative_gap(self, Du_tot, J):
        primal = float(self.a @ np.abs(Du_tot))
        return abs(primal - float(self.f @ (self.BtB @ J))) / max(1.0, primal)

    def u_step(self, c):
        u = np.zeros(self.graph.n)
        if self.solver is not None:
            # 1/2 div(c) = -B^T c for antisymmetric c
            u[self.I] = self.solver.solve(-(self.BtI @ c))
        return u


class _NeumannSplitting(_Splitting):
    def __init__(self, graph, a, alpha, g, ground=0):
        super().__init__(graph, a, alpha)
        self.ground = ground
        self.solver = _grounded_solver(graph, ground)
        self.lift = build_lift_neumann(graph, g, ground, self.solver)
        self.BtB = self.Bt[graph.boundary_index]
        self.g = np.asarray(g, dtype=float)
        self.gg = float(self.g @ self.g)

    def relative_gap(self, Du_tot, J):
        primal = float(self.a @ np.abs(Du_tot))
        lam_fit = float(self.g @ (self.BtB @ J)) / self.gg
        return abs(primal - lam_fit) / max(1.0, primal)

    def u_step(self, c):
        u = _grounded_solve(self.solver, -(self.Bt @ c), self.ground)
        beta = -float(self.lift.h @ u) / self.lift.denom
        return u + beta * self.lift.z


def _extract_conductivity(graph, u, J, a, tol, report):
    span = max(1.0, float(np.abs(u).max(initial=0.0)))
    flat_tol = tol * span
    zero_tol = tol * max(1.0, float(a.max(initial=0.0)))
    try:
        sigma = conductivity_from_pair(graph, u, J, flat_tol=flat_tol, zero_tol=zero_tol)
    except SignViolationError as exc:
        report.notes.append(f"conductivity not extracted: {exc}")
        report.converged = False
        return None
    report.perfect_edges = int(sigma.perfect.sum())
    if report.perfect_edges:
        report.notes.append(f"{report.perfect_edges} perfect-conductor edge(s) flagged")
    return sigma


def _warn_unconverged(report, what):
    if not report.converged:
        warnings.warn(
            f"{what} stopped after {report.iterations} iterations without meeting the stopping rule",
            NonConvergenceWarning,
            stacklevel=3,
        )


def solve_inverse_dirichlet(graph, f, a, cfg=None, relabel=False):
    """Recover potential, current, and conductivity from voltages ``f`` and magnitudes ``a``.

    Parameters
    ----------
    graph : Graph
        Connected network; ``graph.boundary`` carries the voltages.
    f : array_like
        Boundary voltages in boundary order.
    a : EdgeFunction or array_like
        Symmetric nonnegative current magnitudes.
    cfg : AdmmConfig, optional
    relabel : bool
        Try to remove perfect conductors by moving to another minimizer
        whose potential separates every current-carrying edge.

    Returns
    -------
    InverseSolution
        ``current`` is ``2 * alpha * b`` at the last iterate. The report's
        ``dual`` is ``sum_B f_i J_i``.
    """
    cfg = cfg or AdmmConfig()
    graph.require_boundary()
    f = check_boundary_values(graph, f, "Dirichlet data")
    a_fn = check_measurement(graph, a)
    a_vec = a_fn.forward
    u_f = lift_dirichlet(graph, f)
    split = _DirichletSplitting(graph, a_vec, cfg.alpha)
    split.f = f
    u, b, _, converged, history, residuals, gaps = split.run(cfg, u_f)
    u_tot = u + u_f
    J = EdgeFunction.antisymmetric(graph, 2.0 * cfg.alpha * b)
    primal = energy(a_fn, u_tot)
    flux = vertex_flux(graph, J)
    dual = float(f @ flux[graph.boundary_index])
    report = SolveReport(
        iterations=len(history),
        history=history,
        residuals=residuals,
        primal=primal,
        dual=dual,
        gap=primal - dual,
        converged=converged,
        interior_flux=float(np.abs(flux[graph.interior_index]).max(initial=0.0)),
        residual_scale=split.scale,
        gaps=gaps,
    )
    sigma = _extract_conductivity(graph, u_tot, J, a_vec, cfg.tol, report)
    sol = InverseSolution(u_tot, J, sigma, report)
    if relabel and sigma is not None and sigma.perfect.any():
        sol = separate_levels(graph, sol, a_fn, dirichlet=f, tol=cfg.tol)
    _warn_unconverged(report, "Dirichlet inversion")
    return sol


def solve_inverse_neumann(graph, g, a, cfg=None, relabel=False, ground=0):
    """Recover potential, current, conductivity, and scale from injected currents ``g``.

    The returned potential satisfies ``sum_B u_i g_i = 1`` and the current
    has boundary flux ``lam * g`` with ``lam = I(u)``; see
    :func:`rescale_to_unit_flux` to normalize it to ``g``.
    """
    cfg = cfg or AdmmConfig()
    graph.require_boundary()
    g = check_neumann_data(graph, g)
    a_fn = check_measurement(graph, a)
    a_vec = a_fn.forward
    split = _NeumannSplitting(graph, a_vec, cfg.alpha, g, ground)
    v, b, _, converged, history, residuals, gaps = split.run(cfg, split.lift.v_g)
    u_tot = v + split.lift.v_g
    J = EdgeFunction.antisymmetric(graph, 2.0 * cfg.alpha * b)
    lam = energy(a_fn, u_tot)
    flux = vertex_flux(graph, J)
    fb = flux[graph.boundary_index]
    lam_fit = float(fb @ g) / float(g @ g)
    fit_res = float(np.linalg.norm(fb - lam_fit * g))
    report = SolveReport(
        iterations=len(history),
        history=history,
        residuals=residuals,
        primal=lam,
        dual=lam_fit,
        gap=lam - lam_fit,
        converged=converged,
        lam=lam,
        flux_fit_residual=fit_res,
        interior_flux=float(np.abs(flux[graph.interior_index]).max(initial=0.0)),
        residual_scale=split.scale,
        gaps=gaps,
    )
    if abs(lam - lam_fit) > 10 * cfg.tol * max(1.0, lam):
        report.converged = False
        report.notes.append(f"scale mismatch: energy {lam:.6g} vs flux fit {lam_fit:.6g}")
    if lam <= 1e-14 * max(1.0, float(a_vec.max(initial=0.0))):
        report.degenerate = True
        report.notes.append("recovered scale is zero: measurements carry no current")
        warnings.warn("degenerate Neumann data: recovered scale is zero", NonConvergenceWarning, stacklevel=2)
        return InverseSolution(u_tot, J, None, report)
    sigma = _extract_conductivity(graph, u_tot, J, a_vec, cfg.tol, report)
    sol = InverseSolution(u_tot, J, sigma, report)
    if relabel and sigma is not None and sigma.perfect.any():
        sol = separate_levels(graph, sol, a_fn, neumann=g, tol=cfg.tol)
    _warn_unconverged(report, "Neumann inversion")
    return sol


def rescale_to_unit_flux(sol):
    """Divide current and conductivity by ``lam`` so the boundary flux equals ``g``."""
    lam = sol.report.lam
    if lam is None or not lam > 0:
        raise DegenerateDataError(f"cannot rescale by nonpositive scale {lam}")
    sigma = sol.conductivity.scaled(1.0 / lam) if sol.conductivity is not None else None
    return InverseSolution(sol.potential, sol.current / lam, sigma, sol.report)


def separate_levels(graph, sol, a, dirichlet=None, neumann=None, tol=1e-9):
    """Move to a minimizer with no perfect conductors, if one exists.

    Every potential ordered consistently with the recovered current, and
    flat across edges where ``|J| < a``, is again a minimizer. A linear
    program maximizes the smallest drop across current-carrying edges; the
    result is averaged with the original potential. Raises
    PerfectConductorError when the best drop is zero.
    """
    a = check_measurement(graph, a)
    n, m = graph.n, graph.m
    J = sol.current.forward
    zero_tol = tol * max(1.0, float(a.forward.max(initial=0.0)))
    carrying = np.abs(J) > zero_tol
    slack = carrying & (np.abs(J) < a.forward - zero_tol)
    if slack.any():
        raise PerfectConductorError("current below its magnitude on a current-carrying edge")
    h, t = graph.heads, graph.tails
    s = np.sign(J)
    rows = np.flatnonzero(carrying)
    A_ub = np.zeros((len(rows), n + 1))
    A_ub[np.arange(len(rows)), h[rows]] = -s[rows]
    A_ub[np.arange(len(rows)), t[rows]] = s[rows]
    A_ub[:, n] = 1.0
    eq_rows, b_eq = [], []
    for e in np.flatnonzero(~carrying & (a.forward > zero_tol)):
        row = np.zeros(n + 1)
        row[h[e]], row[t[e]] = 1.0, -1.0
        eq_rows.append(row)
        b_eq.append(0.0)
    if dirichlet is not None:
        for i, fi in zip(graph.boundary, dirichlet):
            row = np.zeros(n + 1)
            row[i] = 1.0
            eq_rows.append(row)
            b_eq.append(float(fi))
        cap = float(np.ptp(dirichlet)) or 1.0
    else:
        row = np.zeros(n + 1)
        row[list(graph.boundary)] = neumann
        eq_rows.append(row)
        b_eq.append(1.0)
        row = np.zeros(n + 1)
        row[0] = 1.0
        eq_rows.append(row)
        b_eq.append(float(sol.potential[0]))
        cap = float(np.ptp(sol.potential)) or 1.0
    c = np.zeros(n + 1)
    c[n] = -1.0
    bounds = [(None, None)] * n + [(0.0, cap)]
    res = linprog(
        c,
        A_ub=A_ub if len(rows) else None,
        b_ub=np.zeros(len(rows)) if len(rows) else None,
        A_eq=np.array(eq_rows) if eq_rows else None,
        b_eq=np.array(b_eq) if eq_rows else None,
        bounds=bounds,
        method="highs",
    )
    if res.status != 0 or res.x[n] <= 1e-12 * cap:
        raise PerfectConductorError("no minimizer separates every current-carrying edge")
    u_new = 0.5 * (sol.potential + res.x[:n])
    report = replace(sol.report, notes=sol.report.notes + ["potential relabeled to remove perfect conductors"])
    sigma = conductivity_from_pair(graph, u_new, sol.current, flat_tol=0.25 * res.x[n], zero_tol=zero_tol)
    report.perfect_edges = int(sigma.perfect.sum())
    return InverseSolution(u_new, sol.current, sigma, report)


class DirichletInversion(BaseEstimator):
    """Estimator wrapper around :func:`solve_inverse_dirichlet`.

    ``fit(graph, f, a)`` stores ``potential_``, ``current_``,
    ``conductivity_``, ``report_`` and ``n_iter_``. ``predict(f_new)``
    forward-solves the recovered network for new boundary voltages and
    returns the induced current.
    """

    def __init__(self, alpha=1.0, tol=1e-6, max_iter=50_000, relabel=False):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.relabel = relabel

    def _config(self):
        return AdmmConfig(alpha=self.alpha, tol=self.tol, max_iter=self.max_iter)

    def fit(self, graph, f, a):
        sol = solve_inverse_dirichlet(graph, f, a, self._config(), relabel=self.relabel)
        self.graph_ = graph
        self.potential_ = sol.potential
        self.current_ = sol.current
        self.conductivity_ = sol.conductivity
        self.report_ = sol.report
        self.n_iter_ = sol.report.iterations
        return self

    def predict(self, f):
        check_is_fitted(self, "conductivity_")
        if self.conductivity_ is None:
            raise PerfectConductorError("no conductivity was recovered")
        v = solve_dirichlet_forward(self.graph_, self.conductivity_, f)
        return current_from_potential(self.graph_, self.conductivity_, v)


class NeumannInversion(BaseEstimator):
    """Estimator wrapper around :func:`solve_inverse_neumann`.

    With ``unit_flux=True`` (default) the fitted current and conductivity
    are rescaled so the boundary flux equals ``g``. ``lam_`` keeps the
    recovered scale either way.
    """

    def __init__(self, alpha=1.0, tol=1e-6, max_iter=50_000, relabel=False, unit_flux=True):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.relabel = relabel
        self.unit_flux = unit_flux

    def fit(self, graph, g, a):
        cfg = AdmmConfig(alpha=self.alpha, tol=self.tol, max_iter=self.max_iter)
        sol = solve_inverse_neumann(graph, g, a, cfg, relabel=self.relabel)
        self.lam_ = sol.report.lam
        if self.unit_flux and not sol.report.degenerate:
            sol = rescale_to_unit_flux(sol)
        self.graph_ = graph
        self.potential_ = sol.potential
        self.current_ = sol.current
        self.conductivity_ = sol.conductivity
        self.report_ = sol.report
        self.n_iter_ = sol.report.iterations
        return self

    def predict(self, g):
        check_is_fitted(self, "conductivity_")
        if self.conductivity_ is None:
            raise PerfectConductorError("no conductivity was recovered")
        v = solve_neumann_forward(self.graph_, self.conductivity_, g)
        return current_from_potential(self.graph_, self.conductivity_, v)

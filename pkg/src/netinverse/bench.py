"""Seeded random instances and the tolerance-ladder benchmark."""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .exceptions import GraphError, NetworkError, NonConvergenceWarning
from .forward import current_from_potential, solve_dirichlet_forward
from .graph import EdgeFunction, Graph, vertex_flux
from .inverse import AdmmConfig, solve_inverse_dirichlet, solve_inverse_neumann
from .io import NetworkFile

# one substream per purpose, all derived from the user seed
STREAMS = {"graph": 0, "sigma": 1, "boundary": 2, "f": 3, "draws": 4}

DIRICHLET_TOLS = (1e-3, 1e-4, 1e-5, 1e-6)
NEUMANN_TOLS = (1e-2, 1e-3, 1e-4, 1e-5)
COMPARE_TOLS = (1e-3, 1e-4, 1e-5, 1e-6)


def substream(seed, purpose):
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[purpose]]))


@dataclass(frozen=True)
class BenchConfig:
    nodes: int = 100
    density: float = 0.125
    edges: int | None = None
    boundary: int = 5
    dirichlet_tols: tuple = DIRICHLET_TOLS
    neumann_tols: tuple = NEUMANN_TOLS
    seed: int = 0
    repetitions: int = 0
    compare_tols: tuple = COMPARE_TOLS
    alpha: float = 1.0
    max_iter: int = 50_000
    connect_tries: int = 1000

    def __post_init__(self):
        if not 0 < self.density <= 1:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if not 1 <= self.boundary < self.nodes:
            raise ValueError("boundary count must be at least 1 and below the node count")
        pairs = self.nodes * (self.nodes - 1) // 2
        if self.edges is not None and not self.nodes - 1 <= self.edges <= pairs:
            raise ValueError(f"edge count must lie in [{self.nodes - 1}, {pairs}]")


@dataclass
class BenchInstance:
    network: NetworkFile
    sigma: np.ndarray
    potential: np.ndarray
    current: EdgeFunction
    f: np.ndarray
    g: np.ndarray

    @property
    def graph(self):
        return self.network.graph

    @property
    def a(self):
        return self.current.abs()


def random_graph(n, rng, density=0.125, edges=None, tries=1000):
    """Erdos-Renyi graph over unordered pairs, redrawn until connected."""
    iu, ju = np.triu_indices(n, 1)
    for _ in range(tries):
        if edges is None:
            pick = np.flatnonzero(rng.random(len(iu)) < density)
        else:
            pick = np.sort(rng.choice(len(iu), size=edges, replace=False))
        E = np.c_[iu[pick], ju[pick]]
        adj = sp.csr_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
        if connected_components(adj, directed=False)[0] == 1:
            return Graph(n, E)
    raise GraphError(f"no connected graph after {tries} draws; raise the density")


def dirichlet_draw(graph, sigma, f):
    v = solve_dirichlet_forward(graph, sigma, f)
    J = current_from_potential(graph, sigma, v)
    g = vertex_flux(graph, J)[graph.boundary_index]
    return v, J, g


def generate_bench_instance(cfg):
    """Random network, uniform conductances and voltages, and the induced current."""
    n = cfg.nodes
    graph = random_graph(n, substream(cfg.seed, "graph"), cfg.density, cfg.edges, cfg.connect_tries)
    # 1 - U[0, 1) keeps every conductance strictly positive
    sigma = 1.0 - substream(cfg.seed, "sigma").random(graph.m)
    bnd = substream(cfg.seed, "boundary").choice(n, size=cfg.boundary, replace=False)
    graph = graph.with_boundary(bnd)
    f = substream(cfg.seed, "f").random(cfg.boundary)
    v, J, g = dirichlet_draw(graph, sigma, f)
    return BenchInstance(NetworkFile(graph, sigma, "dirichlet", f), sigma, v, J, f, g)


def relative_error(J, J_true):
    return float(np.linalg.norm(J.forward - J_true.forward) / np.linalg.norm(J_true.forward))


@dataclass
class BenchRow:
    algorithm: int
    tol: float
    rel_error: float | None
    iterations: int | None
    converged: bool
    seconds: float | None = None
    error: str = ""


def _run(algorithm, inst, tol, cfg):
    c = AdmmConfig(alpha=cfg.alpha, tol=tol, max_iter=cfg.max_iter)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            if algorithm == 1:
                sol = solve_inverse_dirichlet(inst.graph, inst.f, inst.a, c)
            else:
                sol = solve_inverse_neumann(inst.graph, inst.g, inst.a, c)
    except NetworkError as exc:
        return BenchRow(algorithm, tol, None, None, False, time.perf_counter() - t0, str(exc))
    return BenchRow(
        algorithm,
        tol,
        relative_error(sol.current, inst.current),
        sol.report.iterations,
        sol.report.converged,
        time.perf_counter() - t0,
    )


def run_bench(cfg, instance=None):
    """One row per (algorithm, tolerance) on a single instance and its data."""
    inst = instance or generate_bench_instance(cfg)
    rows = [_run(1, inst, t, cfg) for t in cfg.dirichlet_tols]
    rows += [_run(2, inst, t, cfg) for t in cfg.neumann_tols]
    return inst, rows


@dataclass
class IterationComparison:
    tols: tuple
    draws: int
    mean_dirichlet: list
    mean_neumann: list
    capped_dirichlet: list = field(default_factory=list)
    capped_neumann: list = field(default_factory=list)


def _draw_iterations(args):
    cfg, graph, sigma, f = args
    _, J, g = dirichlet_draw(graph, sigma, f)
    a = J.abs()
    tight = AdmmConfig(alpha=cfg.alpha, tol=min(cfg.compare_tols), max_iter=cfg.max_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        r1 = solve_inverse_dirichlet(graph, f, a, tight).report
        r2 = solve_inverse_neumann(graph, g, a, tight).report
    out = []
    for rep in (r1, r2):
        its = [rep.stop_iteration(t) for t in cfg.compare_tols]
        out.append([(cfg.max_iter, True) if k is None else (k, False) for k in its])
    return out


def compare_iterations(cfg, instance=None, workers=1):
    """Mean iteration counts of both algorithms over random Dirichlet draws.

    Every draw keeps the instance's graph, conductances and boundary and
    redraws the voltages. Each algorithm runs once at the tightest
    tolerance; stopping points for looser tolerances are read off its
    per-iteration history. Unconverged runs count as ``max_iter``.
    """
    inst = instance or generate_bench_instance(cfg)
    rng = substream(cfg.seed, "draws")
    jobs = [(cfg, inst.graph, inst.sigma, rng.random(cfg.boundary)) for _ in range(cfg.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_draw_iterations, jobs, chunksize=8))
    else:
        results = [_draw_iterations(j) for j in jobs]
    T = len(cfg.compare_tols)
    its = np.array([[[k for k, _ in alg] for alg in r] for r in results], dtype=float).reshape(-1, 2, T)
    capped = np.array([[[c for _, c in alg] for alg in r] for r in results], dtype=bool).reshape(-1, 2, T)
    return IterationComparison(
        tuple(cfg.compare_tols),
        len(results),
        its[:, 0].mean(axis=0).tolist(),
        its[:, 1].mean(axis=0).tolist(),
        capped[:, 0].sum(axis=0).tolist(),
        capped[:, 1].sum(axis=0).tolist(),
    )


def rows_to_tsv(rows, timing=False):
    head = ["algorithm", "tol", "rel_error", "iterations", "converged"] + (["seconds"] if timing else []) + ["error"]
    lines = ["\t".join(head)]
    for r in rows:
        cells = [
            str(r.algorithm),
            repr(r.tol),
            "" if r.rel_error is None else repr(r.rel_error),
            "" if r.iterations is None else str(r.iterations),
            "yes" if r.converged else "no",
        ]
        if timing:
            cells.append(f"{r.seconds:.4f}")
        cells.append(r.error)
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def rows_to_records(rows, timing=False):
    recs = []
    for r in rows:
        d = asdict(r)
        if not timing:
            d.pop("seconds")
        recs.append(d)
    return recs

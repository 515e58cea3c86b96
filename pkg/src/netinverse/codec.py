"""Antisymmetric unit flows hidden behind their magnitudes.

A flow ``A`` on ``2n+1`` vertices with entries in ``{-1, 0, 1}``, even row
weights, and zero row sums off a key set ``I_n`` is sent as ``(|A|, f)``
with ``f`` the row sums on ``I_n``. Knowing the key, the receiver recovers
``A`` with the Neumann least-gradient solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import DecodeError, NetworkError, NotAdmissibleError
from .graph import Graph
from .inverse import AdmmConfig, rescale_to_unit_flux, solve_inverse_neumann

ROUND_TOL = 0.25


@dataclass(frozen=True, eq=False)
class AdmissibleFlow:
    A: np.ndarray
    key: tuple
    f: np.ndarray

    @property
    def n(self):
        return len(self.key)

    def __eq__(self, other):
        return (
            isinstance(other, AdmissibleFlow)
            and self.key == other.key
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.f, other.f)
        )


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """Magnitudes ``|A|`` and key-ordered row sums ``f``."""

    mag: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        mag = np.asarray(self.mag, dtype=np.int64)
        f = np.asarray(self.f, dtype=np.int64)
        N = mag.shape[0]
        if mag.shape != (N, N) or N % 2 == 0:
            raise NetworkError(f"magnitude matrix must be square of odd size, got {mag.shape}")
        if f.shape != ((N - 1) // 2,):
            raise NetworkError(f"flux vector must have {(N - 1) // 2} entries, got {f.shape}")
        if not np.isin(mag, (0, 1)).all() or (mag != mag.T).any() or np.diag(mag).any():
            raise NetworkError("magnitude matrix must be symmetric 0/1 with a zero diagonal")
        if (mag.sum(axis=1) % 2).any():
            raise NetworkError("every row of the magnitude matrix must have even weight")
        object.__setattr__(self, "mag", mag)
        object.__setattr__(self, "f", f)

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and np.array_equal(self.mag, other.mag) and np.array_equal(self.f, other.f)

    def to_text(self):
        N = self.mag.shape[0]
        lines = [f"dim {N}"]
        iu, ju = np.nonzero(np.triu(self.mag, 1))
        lines += [f"mag {i + 1} {j + 1}" for i, j in zip(iu.tolist(), ju.tolist())]
        lines += [f"flux {k + 1} {int(v)}" for k, v in enumerate(self.f.tolist())]
        return "\n".join(lines) + "\n"


def _check_key(N, key):
    key = tuple(int(i) for i in key)
    n = (N - 1) // 2
    if len(key) != n:
        raise NetworkError(f"key must list {n} vertices, got {len(key)}")
    if len(set(key)) != n or any(i < 0 or i >= N for i in key):
        raise NetworkError("key vertices must be distinct and in range")
    return key


def validate_admissible(A, key):
    """Check the four admissibility properties and extract ``f``.

    Every failed property is reported in ``NotAdmissibleError.violations``.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 == 0:
        raise NotAdmissibleError([f"matrix must be square of odd size, got shape {A.shape}"])
    if not np.issubdtype(A.dtype, np.integer):
        if not np.array_equal(A, np.round(A)):
            raise NotAdmissibleError(["entries must be integers"])
    A = A.astype(np.int64)
    N = A.shape[0]
    key = _check_key(N, key)
    problems = []
    if not np.isin(A, (-1, 0, 1)).all() or np.diag(A).any():
        problems.append("entries must lie in {-1, 0, 1} with a zero diagonal")
    if (A != -A.T).any():
        problems.append("matrix must be antisymmetric")
    weight = (A != 0).sum(axis=1)
    odd = np.flatnonzero(weight % 2)
    if odd.size:
        problems.append(f"row {int(odd[0]) + 1} has an odd number ({int(weight[odd[0]])}) of nonzero entries")
    rows = A.sum(axis=1)
    off = np.ones(N, dtype=bool)
    off[list(key)] = False
    leak = np.flatnonzero(off & (rows != 0))
    if leak.size:
        problems.append(f"row {int(leak[0]) + 1} is off the key but sums to {int(rows[leak[0]])}")
    f = rows[list(key)]
    if (f % 2).any():
        problems.append("key row sums must be even")
    if problems:
        raise NotAdmissibleError(problems)
    return AdmissibleFlow(A, key, f)


def _rank_path(rng, rank, order, s, t, used):
    """Random simple path from ``s`` to ``t`` through vertices of intermediate rank."""
    between = order[rank[s] + 1 : rank[t]]
    take = between[rng.random(len(between)) < rng.random()]
    path = [s, *take.tolist(), t]
    edges = [tuple(sorted(p)) for p in zip(path, path[1:])]
    if any(e in used for e in edges):
        return None
    return path, edges


def _superpose_path_pairs(rng, rank, order, key, target, attempts):
    N = len(rank)
    A = np.zeros((N, N), dtype=np.int64)
    used = set()
    placed = 0
    for _ in range(attempts):
        if placed == target:
            break
        s, t = (int(x) for x in rng.choice(key, size=2, replace=False))
        if rank[s] > rank[t]:
            s, t = t, s
        first = _rank_path(rng, rank, order, s, t, used)
        if first is None:
            continue
        second = _rank_path(rng, rank, order, s, t, used | set(first[1]))
        if second is None:
            continue
        for path, edges in (first, second):
            used.update(edges)
            for i, j in zip(path, path[1:]):
                A[i, j], A[j, i] = 1, -1
        placed += 1
    return A


def sample_admissible(n, seed=0, budget=200):
    """Random admissible flow on ``2n+1`` vertices.

    Vertices get a random rank and every edge is oriented towards higher
    rank, so the flow is acyclic. It is a union of edge-disjoint pairs of
    rank-increasing paths between two key vertices; each pair adds two to
    the weight of every vertex it touches. With ``n = 1`` the only
    admissible acyclic flow is zero.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    N = 2 * n + 1
    rng = np.random.default_rng(seed)
    key = tuple(int(i) for i in rng.choice(N, size=n, replace=False))
    if n == 1:
        return validate_admissible(np.zeros((N, N), dtype=np.int64), key)
    # a draw of ranks can leave no room for two disjoint paths; redraw then
    for _ in range(budget):
        order = rng.permutation(N)
        rank = np.empty(N, dtype=np.int64)
        rank[order] = np.arange(N)
        A = _superpose_path_pairs(rng, rank, order, key, int(rng.integers(1, n + 2)), budget)
        if A.any():
            break
    else:
        raise RuntimeError(f"sampling budget exhausted for seed {seed}; retry with another seed")
    return validate_admissible(A, key)


def encode(flow):
    """``(|A|, f)``. Pure circulations (``f = 0`` with ``A != 0``) are rejected."""
    if not isinstance(flow, AdmissibleFlow):
        raise TypeError("encode expects a validated AdmissibleFlow")
    if not flow.f.any() and flow.A.any():
        raise NotAdmissibleError(["flow has no boundary flux: a circulation cannot be decoded"])
    return Ciphertext(np.abs(flow.A), flow.f.copy())


def decode(c, key, cfg=None):
    """Recover ``A`` from ``(|A|, f)`` and the key.

    Each connected piece of the support of ``|A|`` is solved separately:
    it must hold a key vertex with nonzero flux. The rescaled current is
    rounded to ``{-1, 0, 1}``; a rounding residual above 0.25 raises
    DecodeError.
    """
    cfg = cfg or AdmmConfig(alpha=1.0, tol=1e-6, max_iter=100_000)
    N = c.mag.shape[0]
    key = _check_key(N, key)
    f_full = np.zeros(N, dtype=np.int64)
    f_full[list(key)] = c.f
    A = np.zeros((N, N), dtype=np.int64)
    ncomp, labels = connected_components(c.mag, directed=False)
    deg = c.mag.sum(axis=1)
    for comp in range(ncomp):
        verts = np.flatnonzero(labels == comp)
        if deg[verts].sum() == 0:
            if f_full[verts].any():
                raise DecodeError(f"vertex {int(verts[0]) + 1} has flux but no incident edges")
            continue
        bnd = [k for k in key if labels[k] == comp]
        g = f_full[bnd].astype(float)
        if not g.any():
            raise DecodeError(f"component containing vertex {int(verts[0]) + 1} carries no boundary flux")
        local = np.full(N, -1)
        local[verts] = np.arange(len(verts))
        iu, ju = np.nonzero(np.triu(c.mag[np.ix_(verts, verts)], 1))
        graph = Graph(len(verts), np.c_[iu, ju], tuple(local[bnd].tolist()))
        scale = float(np.abs(g).sum())
        try:
            sol = solve_inverse_neumann(graph, g / scale, np.ones(graph.m), cfg)
            sol = rescale_to_unit_flux(sol)
        except NetworkError as exc:
            raise DecodeError(f"inverse solve failed: {exc}") from None
        J = sol.current.forward * scale
        rounded = np.round(J)
        worst = float(np.abs(J - rounded).max(initial=0.0))
        if worst > ROUND_TOL or (np.abs(rounded) != 1).any():
            raise DecodeError(f"recovered current is not a unit flow (rounding residual {worst:.3f})")
        gi, gj = verts[graph.heads], verts[graph.tails]
        A[gi, gj] = rounded.astype(np.int64)
        A[gj, gi] = -rounded.astype(np.int64)
    try:
        flow = validate_admissible(A, key)
    except NotAdmissibleError as exc:
        raise DecodeError(f"decoded matrix is not admissible: {exc}") from None
    if not np.array_equal(flow.f, c.f) or not np.array_equal(np.abs(flow.A), c.mag):
        raise DecodeError("decoded flow does not reproduce the ciphertext")
    return flow


def parse_ciphertext(text):
    """Read ``dim``, ``mag i j`` and ``flux k f_k`` lines (1-based); optional ``key`` line.

    Returns ``(Ciphertext, key or None)`` with a 0-based key.
    """
    N = None
    mags, flux, key = [], {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            word, args = line[0], [int(x) for x in line[1:]]
        except ValueError:
            raise NetworkError(f"line {lineno}: expected integers") from None
        if word == "dim" and len(args) == 1:
            N = args[0]
        elif word == "mag" and len(args) == 2:
            mags.append((lineno, *args))
        elif word == "flux" and len(args) == 2:
            if args[0] in flux:
                raise NetworkError(f"line {lineno}: duplicate flux entry {args[0]}")
            flux[args[0]] = args[1]
        elif word == "key" and args:
            key = tuple(i - 1 for i in args)
        else:
            raise NetworkError(f"line {lineno}: cannot parse {raw.strip()!r}")
    if N is None or N < 1 or N % 2 == 0:
        raise NetworkError("missing or invalid 'dim' line (need an odd positive size)")
    mag = np.zeros((N, N), dtype=np.int64)
    for lineno, i, j in mags:
        if not (1 <= i < j <= N):
            raise NetworkError(f"line {lineno}: need 1 <= i < j <= {N}")
        mag[i - 1, j - 1] = mag[j - 1, i - 1] = 1
    n = (N - 1) // 2
    if set(flux) - set(range(1, n + 1)):
        raise NetworkError(f"flux indices must lie in 1..{n}")
    f = np.array([flux.get(k, 0) for k in range(1, n + 1)], dtype=np.int64)
    return Ciphertext(mag, f), key


def keyspace_size(n):
    """Exact ``n! * C(2n+1, n)``, its asymptotic estimate, and their relative deviation.

    The estimate is ``2^(2n+1) / sqrt(pi n) * n!``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    exact = math.factorial(n) * math.comb(2 * n + 1, n)
    log_est = (2 * n + 1) * math.log(2) - 0.5 * math.log(math.pi * n) + math.lgamma(n + 1)
    log_exact = math.log(exact)
    try:
        estimate = math.exp(log_est)
    except OverflowError:
        estimate = math.inf
    return exact, estimate, math.expm1(log_est - log_exact)

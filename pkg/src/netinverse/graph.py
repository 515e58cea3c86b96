"""Graphs, vertex/edge function spaces, and the unweighted gradient/divergence.

Vertices are 0-based here. Edge functions are stored per undirected edge
``e = (i, j)`` with ``i < j`` as two arrays: ``forward[e] = b_ij`` and
``backward[e] = b_ji``. Entries off the edge set are structurally zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import DimensionError, GraphError

GENERAL = "general"
SYMMETRIC = "symmetric-nonnegative"
ANTISYMMETRIC = "antisymmetric"
_KINDS = (GENERAL, SYMMETRIC, ANTISYMMETRIC)

# |J_i| <= FLUX_RTOL * max(1, ||J||_inf) counts as zero flux
FLUX_RTOL = 1e-9


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple connected graph with a designated boundary.

    Parameters
    ----------
    n : int
        Number of vertices, labeled ``0 .. n-1``.
    edges : sequence of pairs
        Undirected edges. Stored sorted with ``i < j``.
    boundary : sequence of int, optional
        Ordered boundary vertex set. Data vectors on the boundary follow
        this order.
    """

    n: int
    edges: np.ndarray
    boundary: tuple = ()

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint outside 0..n-1")
        loops = e[:, 0] == e[:, 1]
        if loops.any():
            i = int(e[loops][0, 0])
            raise GraphError(f"self-loop at vertex {i}")
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        if len(e) > 1:
            dup = np.all(e[1:] == e[:-1], axis=1)
            if dup.any():
                i, j = e[1:][dup][0]
                raise GraphError(f"duplicate edge ({i}, {j})")
        bnd = tuple(int(i) for i in self.boundary)
        if len(set(bnd)) != len(bnd):
            raise GraphError("boundary lists a vertex twice")
        if any(i < 0 or i >= n for i in bnd):
            raise GraphError("boundary vertex outside 0..n-1")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", _frozen(e, np.int64))
        object.__setattr__(self, "boundary", bnd)
        if n > 1 and connected_components(self.adjacency, directed=False)[0] != 1:
            raise GraphError("graph is not connected")

    @property
    def m(self):
        return len(self.edges)

    @property
    def heads(self):
        return self.edges[:, 0]

    @property
    def tails(self):
        return self.edges[:, 1]

    @cached_property
    def interior(self):
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.boundary)] = False
        return tuple(int(i) for i in np.flatnonzero(mask))

    @cached_property
    def boundary_index(self):
        return np.array(self.boundary, dtype=np.int64)

    @cached_property
    def interior_index(self):
        return np.array(self.interior, dtype=np.int64)

    @cached_property
    def edge_index(self):
        """Map from ``(i, j)`` (either order) to the edge position."""
        lookup = {}
        for e, (i, j) in enumerate(self.edges.tolist()):
            lookup[(i, j)] = e
            lookup[(j, i)] = e
        return lookup

    @cached_property
    def incidence(self):
        """Sparse ``m x n`` matrix with ``+1`` at the head and ``-1`` at the tail."""
        m = self.m
        rows = np.repeat(np.arange(m), 2)
        cols = self.edges.ravel()
        vals = np.tile([1.0, -1.0], m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    @cached_property
    def adjacency(self):
        m = self.m
        data = np.ones(2 * m)
        rows = np.r_[self.heads, self.tails]
        cols = np.r_[self.tails, self.heads]
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def laplacian(self):
        """Unweighted graph Laplacian ``B^T B``."""
        B = self.incidence
        return (B.T @ B).tocsr()

    def weighted_laplacian(self, weights):
        B = self.incidence
        return (B.T @ sp.diags(np.asarray(weights, dtype=float)) @ B).tocsr()

    def with_boundary(self, boundary):
        """Same vertices and edges, new boundary. Shares cached structure."""
        g = Graph.__new__(Graph)
        object.__setattr__(g, "n", self.n)
        object.__setattr__(g, "edges", self.edges)
        bnd = tuple(int(i) for i in boundary)
        if len(set(bnd)) != len(bnd) or any(i < 0 or i >= self.n for i in bnd):
            raise GraphError("invalid boundary")
        object.__setattr__(g, "boundary", bnd)
        for name in ("edge_index", "incidence", "adjacency", "laplacian"):
            if name in self.__dict__:
                g.__dict__[name] = self.__dict__[name]
        return g

    def require_boundary(self):
        if not self.boundary:
            raise GraphError("operation needs a nonempty boundary")

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m}, boundary={list(self.boundary)})"


@dataclass(frozen=True, eq=False)
class EdgeFunction:
    """Element of H(E): an ``n x n`` matrix supported on the graph's edges.

    ``forward[e]`` holds ``b_ij`` and ``backward[e]`` holds ``b_ji`` for the
    edge ``e = (i, j)``, ``i < j``.
    """

    graph: Graph
    forward: np.ndarray
    backward: np.ndarray
    kind: str = GENERAL

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown edge function kind {self.kind!r}")
        fw = np.asarray(self.forward, dtype=float)
        bw = np.asarray(self.backward, dtype=float)
        if fw.shape != (self.graph.m,) or bw.shape != (self.graph.m,):
            raise DimensionError(
                f"edge values must have shape ({self.graph.m},), got {fw.shape} and {bw.shape}"
            )
        if self.kind == SYMMETRIC:
            if not np.array_equal(fw, bw):
                raise ValueError("symmetric edge function needs b_ij == b_ji")
            if (fw < 0).any():
                raise ValueError("symmetric-nonnegative edge function has a negative entry")
        elif self.kind == ANTISYMMETRIC and not np.array_equal(fw, -bw):
            raise ValueError("antisymmetric edge function needs b_ij == -b_ji")
        object.__setattr__(self, "forward", _frozen(fw))
        object.__setattr__(self, "backward", _frozen(bw))

    @classmethod
    def antisymmetric(cls, graph, values):
        """Build from the ``b_ij`` values on edges ``i < j``."""
        v = np.asarray(values, dtype=float)
        return cls(graph, v, -v, ANTISYMMETRIC)

    @classmethod
    def symmetric(cls, graph, values):
        v = np.asarray(values, dtype=float)
        return cls(graph, v, v, SYMMETRIC)

    @classmethod
    def zeros(cls, graph, kind=ANTISYMMETRIC):
        return cls(graph, np.zeros(graph.m), np.zeros(graph.m), kind)

    @classmethod
    def from_dense(cls, graph, matrix, kind=GENERAL, atol=0.0):
        """Read an ``n x n`` matrix; nonzeros off the edge set are rejected."""
        M = np.asarray(matrix, dtype=float)
        if M.shape != (graph.n, graph.n):
            raise DimensionError(f"expected a {graph.n}x{graph.n} matrix, got {M.shape}")
        fw = M[graph.heads, graph.tails]
        bw = M[graph.tails, graph.heads]
        rest = M.copy()
        rest[graph.heads, graph.tails] = 0.0
        rest[graph.tails, graph.heads] = 0.0
        if np.abs(rest).max(initial=0.0) > atol:
            raise ValueError("matrix has nonzero entries off the edge set or on the diagonal")
        if kind == SYMMETRIC and atol > 0 and np.allclose(fw, bw, rtol=0, atol=atol):
            bw = fw
        if kind == ANTISYMMETRIC and atol > 0 and np.allclose(fw, -bw, rtol=0, atol=atol):
            bw = -fw
        return cls(graph, fw, bw, kind)

    def to_dense(self):
        M = np.zeros((self.graph.n, self.graph.n))
        M[self.graph.heads, self.graph.tails] = self.forward
        M[self.graph.tails, self.graph.heads] = self.backward
        return M

    def __getitem__(self, ij):
        i, j = ij
        e = self.graph.edge_index.get((i, j))
        if e is None:
            return 0.0
        return float(self.forward[e] if i < j else self.backward[e])

    def _combine(self, other, op):
        if not isinstance(other, EdgeFunction):
            return NotImplemented
        if other.graph is not self.graph and other.graph.m != self.graph.m:
            raise DimensionError("edge functions live on different graphs")
        kind = self.kind if self.kind == other.kind == ANTISYMMETRIC else GENERAL
        return EdgeFunction(
            self.graph, op(self.forward, other.forward), op(self.backward, other.backward), kind
        )

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        kind = ANTISYMMETRIC if self.kind == ANTISYMMETRIC else GENERAL
        return EdgeFunction(self.graph, -self.forward, -self.backward, kind)

    def __mul__(self, c):
        c = float(c)
        kind = self.kind
        if kind == SYMMETRIC and c < 0:
            kind = GENERAL
        return EdgeFunction(self.graph, c * self.forward, c * self.backward, kind)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def abs(self):
        """Entrywise magnitude; symmetric when ``self`` is (anti)symmetric."""
        fw, bw = np.abs(self.forward), np.abs(self.backward)
        if self.kind in (SYMMETRIC, ANTISYMMETRIC):
            return EdgeFunction(self.graph, fw, fw.copy(), SYMMETRIC)
        return EdgeFunction(self.graph, fw, bw, GENERAL)

    def norm(self):
        """Frobenius norm of the full ``n x n`` matrix."""
        return float(np.sqrt(self.forward @ self.forward + self.backward @ self.backward))


def check_vertex_function(graph, u, name="u"):
    """Return ``u`` as a float vector of length ``graph.n``."""
    arr = np.asarray(u, dtype=float)
    if arr.shape != (graph.n,):
        raise DimensionError(f"{name} must have length {graph.n}, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_boundary_values(graph, values, name="boundary data"):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.shape != (len(graph.boundary),):
        raise DimensionError(
            f"{name} must have one value per boundary vertex ({len(graph.boundary)}), got {arr.size}"
        )
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_edge_function(graph, b, kind=None, name="edge function"):
    """Coerce a dense matrix or an EdgeFunction onto ``graph``.

    With ``kind`` set, the result is checked to have that kind; dense input
    is read with that kind directly.
    """
    if isinstance(b, EdgeFunction):
        if b.graph.n != graph.n or b.graph.m != graph.m:
            raise DimensionError(f"{name} does not conform to the graph")
        if kind is None or b.kind == kind:
            return b
        # a general function may still satisfy the requested structure
        return EdgeFunction(graph, b.forward, b.backward, kind)
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (graph.m,):
            raise DimensionError(f"{name} must have {graph.m} edge values, got {arr.shape}")
        if kind == ANTISYMMETRIC:
            return EdgeFunction.antisymmetric(graph, arr)
        if kind == SYMMETRIC:
            return EdgeFunction.symmetric(graph, arr)
        raise ValueError("per-edge vectors need an explicit symmetric or antisymmetric kind")
    return EdgeFunction.from_dense(graph, arr, kind or GENERAL)


def check_measurement(graph, a, name="measurement matrix"):
    """Validate a symmetric nonnegative measurement matrix.

    Non-symmetric input is rejected rather than symmetrized.
    """
    try:
        out = as_edge_function(graph, a, SYMMETRIC, name)
    except ValueError as exc:
        if isinstance(exc, DimensionError):
            raise
        raise ValueError(f"{name}: {exc}") from None
    if not np.isfinite(out.forward).all():
        raise ValueError(f"{name} has non-finite entries")
    return out


def gradient(graph, u):
    """Discrete gradient ``(Du)_ij = u_i - u_j`` on edges."""
    u = check_vertex_function(graph, u)
    return EdgeFunction.antisymmetric(graph, u[graph.heads] - u[graph.tails])


def divergence(graph, b):
    """``(div b)_i = sum_j (b_ji - b_ij)``."""
    b = as_edge_function(graph, b)
    out = np.zeros(graph.n)
    diff = b.backward - b.forward
    np.add.at(out, graph.heads, diff)
    np.add.at(out, graph.tails, -diff)
    return out


def inner_v(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionError(f"vertex functions differ in shape: {u.shape} vs {v.shape}")
    return float(u @ v)


def inner_e(b, d):
    if not (isinstance(b, EdgeFunction) and isinstance(d, EdgeFunction)):
        b_arr, d_arr = np.asarray(b, dtype=float), np.asarray(d, dtype=float)
        if b_arr.shape != d_arr.shape:
            raise DimensionError("edge functions differ in shape")
        return float(np.sum(b_arr * d_arr))
    if b.graph.m != d.graph.m:
        raise DimensionError("edge functions live on different graphs")
    return float(b.forward @ d.forward + b.backward @ d.backward)


def energy(a, u, graph=None):
    """Weighted l1 energy ``1/2 sum_{i,j} a_ij |u_i - u_j|``.

    ``a`` may be a measurement EdgeFunction or, together with ``graph``, a
    dense matrix.
    """
    if not isinstance(a, EdgeFunction):
        if graph is None:
            A = np.asarray(a, dtype=float)
            u = np.asarray(u, dtype=float)
            if A.shape != (u.size, u.size):
                raise DimensionError("measurement matrix and potential do not conform")
            return 0.5 * float(np.sum(A * np.abs(u[:, None] - u[None, :])))
        a = check_measurement(graph, a)
    g = a.graph
    u = check_vertex_function(g, u)
    du = np.abs(u[g.heads] - u[g.tails])
    return 0.5 * float((a.forward + a.backward) @ du)


def vertex_flux(graph, J):
    """Net outflow ``J_i = sum_j J_ij`` at every vertex."""
    J = as_edge_function(graph, J)
    out = np.zeros(graph.n)
    np.add.at(out, graph.heads, J.forward)
    np.add.at(out, graph.tails, J.backward)
    return out


def classify_vertices(graph, J, rtol=FLUX_RTOL):
    """Split vertices into (interior, boundary) by whether their flux vanishes."""
    J = as_edge_function(graph, J)
    flux = vertex_flux(graph, J)
    scale = max(1.0, float(np.abs(J.forward).max(initial=0.0)), float(np.abs(J.backward).max(initial=0.0)))
    zero = np.abs(flux) <= rtol * scale
    return tuple(np.flatnonzero(zero).tolist()), tuple(np.flatnonzero(~zero).tolist())

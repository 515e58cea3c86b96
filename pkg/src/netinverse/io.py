"""Network text and JSON formats.

Text format, one directive per line, ``#`` starts a comment::

    nodes 3
    mode dirichlet
    edge 1 2 0.5
    edge 2 3 0.5
    boundary 1 1.0
    boundary 3 0.0

Vertices are 1-based in files and 0-based in memory. The optional edge
value is a conductance for forward solves and a measured current
magnitude for inversions; ``signed=True`` reads it as an antisymmetric
value ``W_ij`` instead, with ``edge j i w`` meaning ``W_ij = -w``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, GraphError
from .graph import Graph

MODES = ("dirichlet", "neumann")


@dataclass(frozen=True, eq=False)
class NetworkFile:
    graph: Graph
    values: np.ndarray | None = None
    mode: str | None = None
    boundary_values: np.ndarray | None = None

    def __post_init__(self):
        if self.mode is not None and self.mode not in MODES:
            raise FormatError(f"mode must be one of {MODES}, got {self.mode!r}")

    def __eq__(self, other):
        if not isinstance(other, NetworkFile):
            return NotImplemented
        same_vals = (self.values is None and other.values is None) or (
            self.values is not None and other.values is not None and np.array_equal(self.values, other.values)
        )
        return (
            self.graph.n == other.graph.n
            and np.array_equal(self.graph.edges, other.graph.edges)
            and self.graph.boundary == other.graph.boundary
            and same_vals
            and self.mode == other.mode
            and np.array_equal(self._bvals(), other._bvals())
        )

    def _bvals(self):
        return np.zeros(0) if self.boundary_values is None else self.boundary_values


def _number(tok, lineno, kind=float):
    try:
        x = kind(tok)
    except ValueError:
        raise FormatError(f"expected a number, got {tok!r}", lineno) from None
    if kind is float and not np.isfinite(x):
        raise FormatError(f"non-finite value {tok!r}", lineno)
    return x


def parse_network(text, signed=False):
    """Parse the line format into a :class:`NetworkFile`."""
    n = None
    mode = None
    edges = {}
    bnd = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        word, args = tok[0], tok[1:]
        if word == "nodes":
            if len(args) != 1:
                raise FormatError("usage: nodes <n>", lineno)
            if n is not None:
                raise FormatError("repeated 'nodes' line", lineno)
            n = _number(args[0], lineno, int)
            if n < 1:
                raise FormatError("need at least one node", lineno)
        elif word == "mode":
            if len(args) != 1 or args[0] not in MODES:
                raise FormatError("usage: mode dirichlet|neumann", lineno)
            mode = args[0]
        elif word == "edge":
            if len(args) not in (2, 3):
                raise FormatError("usage: edge <i> <j> [value]", lineno)
            i, j = (_number(a, lineno, int) for a in args[:2])
            if n is None:
                raise FormatError("'nodes' must come before edges", lineno)
            if not (1 <= i <= n and 1 <= j <= n):
                raise FormatError(f"vertex outside 1..{n}", lineno)
            if i == j:
                raise FormatError(f"self-loop at vertex {i}", lineno)
            value = _number(args[2], lineno) if len(args) == 3 else None
            if value is not None and not signed and value < 0:
                raise FormatError("edge values must be nonnegative", lineno)
            if i > j:
                i, j = j, i
                if signed and value is not None:
                    value = -value
            if (i, j) in edges:
                raise FormatError(f"duplicate edge ({i}, {j})", lineno)
            edges[(i, j)] = (value, lineno)
        elif word == "boundary":
            if len(args) != 2:
                raise FormatError("usage: boundary <i> <value>", lineno)
            i = _number(args[0], lineno, int)
            if n is None:
                raise FormatError("'nodes' must come before boundary lines", lineno)
            if not 1 <= i <= n:
                raise FormatError(f"vertex outside 1..{n}", lineno)
            if i in bnd:
                raise FormatError(f"boundary vertex {i} listed twice", lineno)
            bnd[i] = _number(args[1], lineno)
        else:
            raise FormatError(f"unknown directive {word!r}", lineno)
    if n is None:
        raise FormatError("missing 'nodes' line")
    with_value = [v is not None for v, _ in edges.values()]
    if any(with_value) and not all(with_value):
        line = next(ln for v, ln in edges.values() if v is None)
        raise FormatError("either every edge carries a value or none does", line)
    pairs = sorted(edges)
    try:
        graph = Graph(n, np.array([(i - 1, j - 1) for i, j in pairs], dtype=np.int64), tuple(i - 1 for i in bnd))
    except GraphError as exc:
        raise FormatError(str(exc)) from None
    values = np.array([edges[p][0] for p in pairs], dtype=float) if pairs and all(with_value) else None
    bvals = np.array(list(bnd.values()), dtype=float) if bnd else None
    return NetworkFile(graph, values, mode, bvals)


def _fmt(x):
    return repr(float(x))


def write_network(nf):
    """Canonical text form: ``nodes``, ``mode``, sorted edges, boundary in stored order."""
    g = nf.graph
    lines = [f"nodes {g.n}"]
    if nf.mode is not None:
        lines.append(f"mode {nf.mode}")
    for e, (i, j) in enumerate(g.edges.tolist()):
        tail = f" {_fmt(nf.values[e])}" if nf.values is not None else ""
        lines.append(f"edge {i + 1} {j + 1}{tail}")
    for k, i in enumerate(g.boundary):
        lines.append(f"boundary {i + 1} {_fmt(nf.boundary_values[k])}")
    return "\n".join(lines) + "\n"


def network_to_json(nf):
    g = nf.graph
    edges = []
    for e, (i, j) in enumerate(g.edges.tolist()):
        edges.append([i + 1, j + 1] + ([float(nf.values[e])] if nf.values is not None else []))
    doc = {
        "nodes": g.n,
        "edges": edges,
        "boundary": [[i + 1, float(nf.boundary_values[k])] for k, i in enumerate(g.boundary)],
        "mode": nf.mode,
    }
    return json.dumps(doc, indent=2) + "\n"


def network_from_json(text, signed=False):
    """Read the JSON form by converting it to the line format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise FormatError("JSON network needs a 'nodes' field")
    lines = [f"nodes {int(doc['nodes'])}"]
    if doc.get("mode"):
        lines.append(f"mode {doc['mode']}")
    for item in doc.get("edges", []):
        lines.append("edge " + " ".join(_fmt(x) if k == 2 else str(int(x)) for k, x in enumerate(item)))
    for i, v in doc.get("boundary", []):
        lines.append(f"boundary {int(i)} {_fmt(v)}")
    return parse_network("\n".join(lines), signed=signed)


def load_network(path, signed=False):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return network_from_json(text, signed)
    return parse_network(text, signed)


def parse_flow(text):
    """Flow file: ``dim <N>``, ``key <i1> ... <in>``, ``arc <i> <j>`` for each ``A_ij = 1``.

    Returns ``(A, key)`` with a 0-based key.
    """
    N, key, arcs = None, None, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        args = [_number(t, lineno, int) for t in tok[1:]]
        if tok[0] == "dim" and len(args) == 1:
            N = args[0]
        elif tok[0] == "key":
            key = tuple(i - 1 for i in args)
        elif tok[0] == "arc" and len(args) == 2:
            arcs.append((lineno, *args))
        else:
            raise FormatError(f"cannot parse {raw.strip()!r}", lineno)
    if N is None or key is None:
        raise FormatError("flow file needs 'dim' and 'key' lines")
    A = np.zeros((N, N), dtype=np.int64)
    for lineno, i, j in arcs:
        if not (1 <= i <= N and 1 <= j <= N) or i == j:
            raise FormatError(f"arc ({i}, {j}) is out of range or a loop", lineno)
        if A[i - 1, j - 1]:
            raise FormatError(f"arc ({i}, {j}) given twice or in both directions", lineno)
        A[i - 1, j - 1], A[j - 1, i - 1] = 1, -1
    return A, key


def write_flow(A, key):
    A = np.asarray(A)
    lines = [f"dim {A.shape[0]}", "key " + " ".join(str(i + 1) for i in key)]
    iu, ju = np.nonzero(A > 0)
    lines += [f"arc {i + 1} {j + 1}" for i, j in zip(iu.tolist(), ju.tolist())]
    return "\n".join(lines) + "\n"

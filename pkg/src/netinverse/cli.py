"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 non-convergence.
Every command renders one payload either as ``name value ...`` lines or as
a JSON object with the same numbers.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import bench as benchmod
from .codec import Ciphertext, decode, encode, keyspace_size, parse_ciphertext, sample_admissible, validate_admissible
from .exceptions import NetworkError, NonConvergenceWarning
from .forward import current_from_potential, solve_dirichlet_forward, solve_neumann_forward
from .inverse import AdmmConfig, rescale_to_unit_flux, solve_inverse_dirichlet, solve_inverse_neumann
from .io import load_network, parse_flow, write_flow
from .multi import Dataset, MeasurementSet, consistency_check
from .random_walk import design_transitions, simulate_net_passages, transitions_from_conductivity

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _value(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def render(payload, fmt):
    """``payload`` maps names to scalars or to lists of rows."""
    if fmt == "json":
        doc = {}
        for k, v in payload.items():
            doc[k] = [[_value(x) for x in row] for row in v] if isinstance(v, list) else _value(v)
        return json.dumps(doc, indent=1) + "\n"
    lines = []
    for k, v in payload.items():
        rows = v if isinstance(v, list) else [[v]]
        for row in rows:
            lines.append(" ".join([k] + [_text(x) for x in row]))
    return "\n".join(lines) + "\n"


def _text(x):
    x = _value(x)
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _config(args):
    return AdmmConfig(alpha=args.alpha, tol=args.tol, max_iter=args.max_iter)


def _read_network(args, signed=False):
    if not args.input:
        raise UsageError("--input is required")
    return load_network(args.input[0], signed=signed)


def _potential_rows(v):
    return [[i + 1, x] for i, x in enumerate(v)]


def _edge_rows(graph, values):
    return [[int(i) + 1, int(j) + 1, x] for (i, j), x in zip(graph.edges.tolist(), values)]


def _report_payload(rep):
    out = {
        "iterations": rep.iterations,
        "converged": rep.converged,
        "primal": rep.primal,
        "dual": rep.dual,
        "gap": rep.gap,
    }
    if rep.lam is not None:
        out["lambda"] = rep.lam
    return out


def cmd_forward(args):
    nf = _read_network(args)
    if nf.values is None or nf.mode is None:
        raise NetworkError("forward needs conductances on every edge and a mode line")
    if nf.mode == "dirichlet":
        v = solve_dirichlet_forward(nf.graph, nf.values, nf.boundary_values)
    else:
        v = solve_neumann_forward(nf.graph, nf.values, nf.boundary_values)
    J = current_from_potential(nf.graph, nf.values, v)
    return {"potential": _potential_rows(v), "current": _edge_rows(nf.graph, J.forward)}, True


def _inverse_payload(graph, sol):
    payload = {"potential": _potential_rows(sol.potential), "current": _edge_rows(graph, sol.current.forward)}
    if sol.conductivity is not None:
        payload["conductivity"] = _edge_rows(graph, sol.conductivity.values)
    payload.update(_report_payload(sol.report))
    return payload


def cmd_invert_dirichlet(args):
    nf = _read_network(args)
    if nf.values is None:
        raise NetworkError("inversion needs a measured magnitude on every edge")
    sol = solve_inverse_dirichlet(nf.graph, nf.boundary_values, nf.values, _config(args), relabel=args.relabel)
    return _inverse_payload(nf.graph, sol), sol.report.converged


def cmd_invert_neumann(args):
    nf = _read_network(args)
    if nf.values is None:
        raise NetworkError("inversion needs a measured magnitude on every edge")
    sol = solve_inverse_neumann(nf.graph, nf.boundary_values, nf.values, _config(args), relabel=args.relabel)
    if sol.report.degenerate:
        raise NetworkError("degenerate data: the recovered scale is zero")
    if args.unit_flux:
        sol = rescale_to_unit_flux(sol)
    return _inverse_payload(nf.graph, sol), sol.report.converged


def cmd_multi_check(args):
    if not args.input or len(args.input) < 2:
        raise UsageError("multi-check needs --input at least twice")
    nfs = [load_network(p) for p in args.input]
    base = nfs[0].graph
    for nf in nfs[1:]:
        if nf.graph.n != base.n or not np.array_equal(nf.graph.edges, base.edges):
            raise NetworkError("all datasets must share nodes and edges")
    datasets = []
    for nf in nfs:
        if nf.values is None or nf.mode is None:
            raise NetworkError("each dataset needs magnitudes on every edge and a mode line")
        datasets.append(Dataset(nf.graph.boundary, nf.mode, nf.boundary_values, nf.values))
    res = consistency_check(base, MeasurementSet(datasets), _config(args))
    payload = {"consistent": res.consistent, "phi": res.phi, "separation": res.separation}
    if "neumann" in [d.mode for d in datasets]:
        payload["scales"] = res.scales
    if res.sigma is not None:
        vals = np.where(res.determined, res.sigma.values, np.nan)
        payload["conductivity"] = _edge_rows(base, vals)
    if res.reason:
        payload["reason"] = res.reason
    converged = all(s.report.converged for s in res.solutions)
    return payload, converged


def _entry_exit(nf):
    if nf.boundary_values is None:
        raise NetworkError("boundary lines must give entry (positive) and exit (negative) weights")
    b = np.asarray(nf.graph.boundary)
    vals = nf.boundary_values
    entry, exit_ = b[vals > 0], b[vals < 0]
    return entry.tolist(), vals[vals > 0], exit_.tolist()


def cmd_design_walk(args):
    nf = _read_network(args, signed=True)
    if nf.values is None:
        raise NetworkError("design-walk needs a net passage count on every edge")
    entry, probs, exit_ = _entry_exit(nf)
    base = nf.graph.with_boundary(())
    d = design_transitions(base, nf.values, entry, exit_, probs / probs.sum(), _config(args), relative=args.relative)
    P = d.transitions.P.tocoo()
    trans = sorted(zip(P.row.tolist(), P.col.tolist(), P.data.tolist()))
    payload = {
        "transition": [[i + 1, j + 1, p] for i, j, p in trans],
        "conductivity": _edge_rows(base, d.sigma.values),
        "lambda": d.lam,
        "residual": d.residual,
    }
    return payload, d.solution.report.converged


def cmd_simulate_walk(args):
    nf = _read_network(args)
    if nf.values is None:
        raise NetworkError("simulate-walk needs conductances on every edge")
    entry, probs, exit_ = _entry_exit(nf)
    graph = nf.graph.with_boundary(())
    tm = transitions_from_conductivity(graph, nf.values, absorbing=exit_, allow_isolated=True)
    est = simulate_net_passages(tm, entry, probs / probs.sum(), exit_, args.walkers, seed=args.seed)
    rows = [
        [int(i) + 1, int(j) + 1, m, s]
        for (i, j), m, s in zip(graph.edges.tolist(), est.mean.forward, est.stderr)
    ]
    return {"seed": est.seed, "walkers": est.walkers, "passages": rows}, True


def _cipher_payload(c, key=None):
    iu, ju = np.nonzero(np.triu(c.mag, 1))
    payload = {
        "dim": c.mag.shape[0],
        "mag": [[i + 1, j + 1] for i, j in zip(iu.tolist(), ju.tolist())],
        "flux": [[k + 1, int(v)] for k, v in enumerate(c.f.tolist())],
    }
    if key is not None:
        payload["key"] = [[i + 1 for i in key]]
    return payload


def cmd_encode(args):
    if args.n is not None:
        flow = sample_admissible(args.n, seed=args.seed)
        show_key = True
    else:
        if not args.input:
            raise UsageError("encode needs --input FLOW or --n N")
        with open(args.input[0], encoding="utf-8") as fh:
            A, key = parse_flow(fh.read())
        flow = validate_admissible(A, key)
        show_key = args.with_key
    c = encode(flow)
    return _cipher_payload(c, flow.key if show_key else None), True


def cmd_decode(args):
    if not args.input:
        raise UsageError("--input is required")
    with open(args.input[0], encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        N = int(doc["dim"])
        mag = np.zeros((N, N), dtype=np.int64)
        for i, j in doc["mag"]:
            mag[i - 1, j - 1] = mag[j - 1, i - 1] = 1
        c = Ciphertext(mag, [v for _, v in sorted(doc["flux"])])
        key = tuple(i - 1 for i in doc["key"][0]) if "key" in doc else None
    else:
        c, key = parse_ciphertext(text)
    if args.key:
        key = tuple(int(t) - 1 for t in args.key.replace(",", " ").split())
    if key is None:
        raise UsageError("decode needs the key (a 'key' line or --key)")
    flow = decode(c, key, _config(args))
    iu, ju = np.nonzero(flow.A > 0)
    return {
        "dim": flow.A.shape[0],
        "key": [[i + 1 for i in flow.key]],
        "arc": [[i + 1, j + 1] for i, j in zip(iu.tolist(), ju.tolist())],
    }, True


def cmd_bench(args):
    cfg = benchmod.BenchConfig(
        nodes=args.nodes,
        density=args.density,
        edges=args.edges,
        boundary=args.boundary,
        seed=args.seed,
        repetitions=args.reps,
        alpha=args.alpha,
        max_iter=args.max_iter,
    )
    inst, rows = benchmod.run_bench(cfg)
    converged = all(r.converged for r in rows)
    if args.format == "text" and not args.reps:
        header = f"# nodes {inst.graph.n} edges {inst.graph.m} boundary {len(inst.graph.boundary)} seed {cfg.seed}\n"
        return header + benchmod.rows_to_tsv(rows, args.timing), converged
    cols = ["algorithm", "tol", "rel_error", "iterations", "converged"] + (["seconds"] if args.timing else [])
    payload = {
        "nodes": inst.graph.n,
        "edges": inst.graph.m,
        "seed": cfg.seed,
        "row": [[getattr(r, c) for c in cols] for r in rows],
    }
    if args.reps:
        cmp = benchmod.compare_iterations(cfg, inst, workers=args.workers)
        payload["draws"] = cmp.draws
        payload["mean_iterations"] = [
            [t, m1, m2] for t, m1, m2 in zip(cmp.tols, cmp.mean_dirichlet, cmp.mean_neumann)
        ]
    return payload, converged


def cmd_keyspace(args):
    exact, est, dev = keyspace_size(args.n)
    return {"n": args.n, "exact": exact, "estimate": est, "relative_deviation": dev}, True


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--alpha", type=float, default=1.0, help="penalty parameter (default 1)")
    common.add_argument("--tol", type=float, default=1e-6, help="stopping tolerance")
    common.add_argument("--max-iter", type=int, default=50_000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--input", action="append", help="input file (repeat for multi-check)")
    common.add_argument("--output", help="write here instead of stdout")
    common.add_argument("--format", choices=("text", "json"), default="text")

    parser = _Parser(prog="netinverse", description="Resistor network forward and inverse solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    add("forward", cmd_forward, "solve for potential and current")
    for name, func in (("invert-dirichlet", cmd_invert_dirichlet), ("invert-neumann", cmd_invert_neumann)):
        p = add(name, func, "recover current and conductivity from magnitudes")
        p.add_argument("--relabel", action="store_true", help="try to remove perfect conductors")
        if name == "invert-neumann":
            p.add_argument("--unit-flux", action="store_true", help="rescale so the boundary flux equals g")
    p = add("multi-check", cmd_multi_check, "test several datasets for a common conductivity")
    p.set_defaults(tol=1e-9, max_iter=200_000)
    p = add("design-walk", cmd_design_walk, "transition matrix for prescribed net passages")
    p.add_argument("--relative", action="store_true", help="passages known only up to scale")
    p.set_defaults(tol=1e-9, max_iter=200_000)
    p = add("simulate-walk", cmd_simulate_walk, "Monte-Carlo net passages")
    p.add_argument("--walkers", type=int, default=100_000)
    p = add("encode", cmd_encode, "encode a flow (from --input, or sampled with --n)")
    p.add_argument("--n", type=int)
    p.add_argument("--with-key", action="store_true")
    p = add("decode", cmd_decode, "decode a ciphertext")
    p.add_argument("--key", help="key vertices, 1-based, space or comma separated")
    p = add("bench", cmd_bench, "tolerance ladder on a random instance")
    p.add_argument("--nodes", type=int, default=100)
    p.add_argument("--density", type=float, default=0.125)
    p.add_argument("--edges", type=int)
    p.add_argument("--boundary", type=int, default=5)
    p.add_argument("--reps", type=int, default=0, help="Dirichlet draws for the iteration comparison")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add wall-time columns")
    p = add("keyspace", cmd_keyspace, "count admissible keys")
    p.add_argument("--n", type=int, required=True)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            payload, converged = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    text = payload if isinstance(payload, str) else render(payload, args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not converged:
        print("warning: iteration cap reached before convergence", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

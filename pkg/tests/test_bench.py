import numpy as np
import pytest

from netinverse.bench import (
    BenchConfig,
    compare_iterations,
    generate_bench_instance,
    random_graph,
    rows_to_records,
    rows_to_tsv,
    run_bench,
    substream,
)
from netinverse.exceptions import GraphError
from netinverse.io import write_network


def test_instance_is_deterministic():
    a = generate_bench_instance(BenchConfig(seed=4, nodes=30, density=0.2))
    b = generate_bench_instance(BenchConfig(seed=4, nodes=30, density=0.2))
    assert write_network(a.network) == write_network(b.network)
    assert np.array_equal(a.current.forward, b.current.forward)
    c = generate_bench_instance(BenchConfig(seed=5, nodes=30, density=0.2))
    assert write_network(a.network) != write_network(c.network)


def test_default_instance_shape():
    inst = generate_bench_instance(BenchConfig())
    g = inst.graph
    assert g.n == 100 and len(g.boundary) == 5
    assert (inst.sigma > 0).all() and (inst.sigma <= 1).all()
    assert abs(inst.g.sum()) <= 1e-12
    # the drawn density lands near the requested one
    assert 0.09 <= g.m / (100 * 99 / 2) <= 0.16


def test_fixed_edge_count():
    inst = generate_bench_instance(BenchConfig(seed=1, nodes=20, edges=40))
    assert inst.graph.m == 40


def test_substreams_are_independent_of_each_other():
    x = substream(0, "graph").random(3)
    y = substream(0, "sigma").random(3)
    assert not np.array_equal(x, y)
    assert np.array_equal(x, substream(0, "graph").random(3))


def test_config_validation():
    with pytest.raises(ValueError, match="density"):
        BenchConfig(density=0)
    with pytest.raises(ValueError, match="boundary"):
        BenchConfig(nodes=5, boundary=5)
    with pytest.raises(ValueError, match="edge count"):
        BenchConfig(nodes=6, boundary=2, edges=2)


def test_random_graph_gives_up():
    with pytest.raises(GraphError, match="raise the density"):
        random_graph(30, np.random.default_rng(0), density=0.01, tries=3)


def test_run_bench_rows():
    cfg = BenchConfig(seed=0, nodes=30, density=0.2, boundary=4, dirichlet_tols=(1e-4,), neumann_tols=(1e-3,))
    inst, rows = run_bench(cfg)
    assert [r.algorithm for r in rows] == [1, 2]
    assert all(r.converged and r.rel_error < 1e-2 for r in rows)
    tsv = rows_to_tsv(rows)
    assert tsv.splitlines()[0] == "algorithm\ttol\trel_error\titerations\tconverged\terror"
    assert len(tsv.splitlines()) == 3
    assert "seconds" not in rows_to_records(rows)[0]
    assert "seconds" in rows_to_records(rows, timing=True)[0]


def test_capped_run_is_reported_unconverged():
    cfg = BenchConfig(seed=0, nodes=30, density=0.2, dirichlet_tols=(1e-8,), neumann_tols=(), max_iter=1)
    _, rows = run_bench(cfg)
    assert not rows[0].converged and rows[0].iterations == 1
    assert rows_to_tsv(rows).splitlines()[1].split("\t")[4] == "no"


def test_compare_iterations_small():
    cfg = BenchConfig(seed=0, nodes=20, density=0.3, boundary=4, repetitions=4, compare_tols=(1e-3, 1e-5))
    out = compare_iterations(cfg)
    assert out.draws == 4
    assert len(out.mean_dirichlet) == len(out.mean_neumann) == 2
    # looser tolerance never needs more iterations
    assert out.mean_dirichlet[0] <= out.mean_dirichlet[1]
    assert out.mean_neumann[0] <= out.mean_neumann[1]
    assert compare_iterations(cfg, workers=2).mean_dirichlet == out.mean_dirichlet

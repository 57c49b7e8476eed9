import numpy as np
import pytest

from eda_planner.errors import ConfigurationError, ContractViolation
from eda_planner.graphs import SourceKind, dump_graph, graph_stats
from eda_planner.mckp import compute_speedups
from eda_planner.stages import Stage, VCPU_OPTIONS
from eda_planner.synth_data import (
    OracleParams,
    SERIAL_FRACTION_BY_SIZE,
    default_params,
    gen_dataset,
    gen_graph,
    load_samples,
    oracle_runtime,
    write_dataset,
)


def test_gen_graph_deterministic():
    a = gen_graph(7, "small", SourceKind.AIG)
    b = gen_graph(7, "small", SourceKind.AIG)
    assert dump_graph(a) == dump_graph(b)
    c = gen_graph(8, "small", SourceKind.AIG)
    assert dump_graph(a) != dump_graph(c)


@pytest.mark.parametrize("size_class,target", [("small", 100), ("medium", 1000)])
@pytest.mark.parametrize("kind", [SourceKind.AIG, SourceKind.NETLIST])
def test_gen_graph_size_classes(size_class, target, kind):
    for seed in (1, 2, 3):
        g = gen_graph(seed, size_class, kind)
        assert 0.8 * target <= g.node_count <= 1.2 * target
        assert g.source_kind is kind


def test_large_class_within_20_percent():
    g = gen_graph(5, "large", SourceKind.NETLIST)
    assert 8000 <= g.node_count <= 12000


def test_aig_like_graphs_pass_dag_validation():
    for seed in range(5):
        g = gen_graph(seed, "small", SourceKind.AIG)
        stats = graph_stats(g)
        assert stats.depth is not None  # make_graph already enforced acyclicity
        for node in g.nodes:
            if node.kind.name == "AND_GATE":
                assert node.in_degree <= 2


def test_gen_graph_rejects_unknown_size_class():
    with pytest.raises(ContractViolation):
        gen_graph(1, "gigantic", SourceKind.AIG)


# ---------------------------------------------------------------------------
# Runtime oracle


def flat_params(f=0.2, noise=0.0, app=Stage.ROUTING):
    return OracleParams(
        application=app, node_cost_s=0.0, edge_cost_s=0.0, base_cost_s=1000.0,
        serial_fraction=f, noise_rel=noise, seed=1,
    )


def test_amdahl_point_value():
    g = gen_graph(1, "small", SourceKind.NETLIST)
    # t1 = 1000, f = 0.2, k = 4 -> 1000 * (0.2 + 0.8/4) = 400
    assert oracle_runtime(g, flat_params(), 4) == 400.0


def test_one_vcpu_is_exact_base_runtime():
    g = gen_graph(2, "small", SourceKind.NETLIST)
    assert oracle_runtime(g, flat_params(), 1) == 1000.0


def test_serial_fraction_one_means_no_scaling():
    g = gen_graph(3, "small", SourceKind.NETLIST)
    values = {k: oracle_runtime(g, flat_params(f=1.0), k) for k in VCPU_OPTIONS}
    assert set(values.values()) == {1000.0}


def test_monotone_in_vcpus_and_speedup_bounds():
    params = default_params(Stage.ROUTING, "medium", noise_rel=0.0)
    g = gen_graph(4, "medium", SourceKind.NETLIST)
    runtimes = {k: oracle_runtime(g, params, k) for k in VCPU_OPTIONS}
    assert runtimes[1] >= runtimes[2] >= runtimes[4] >= runtimes[8]
    speedups = compute_speedups(runtimes)
    for k in VCPU_OPTIONS:
        assert speedups[k] <= k + 1e-9
        assert speedups[k] <= 1.0 / params.serial_fraction + 1e-9


def test_noise_is_seeded_and_bounded():
    g = gen_graph(5, "small", SourceKind.NETLIST)
    params = flat_params(noise=0.05)
    a = oracle_runtime(g, params, 2)
    b = oracle_runtime(g, params, 2)
    assert a == b
    clean = oracle_runtime(g, flat_params(noise=0.0), 2)
    assert abs(a - clean) <= 0.05 * clean + 1e-9


def test_invalid_vcpus_rejected():
    g = gen_graph(5, "small", SourceKind.NETLIST)
    with pytest.raises(ContractViolation):
        oracle_runtime(g, flat_params(), 3)


def test_params_validation():
    with pytest.raises(ContractViolation):
        OracleParams(Stage.STA, 0.0, 0.0, 1.0, 0.5)  # no per-size cost
    with pytest.raises(ContractViolation):
        OracleParams(Stage.STA, 1.0, 1.0, 1.0, 0.0)  # f out of range
    with pytest.raises(ContractViolation):
        OracleParams(Stage.STA, 1.0, 1.0, 1.0, 0.5, noise_rel=-0.1)


def test_size_dependent_serial_fractions_decrease():
    assert (
        SERIAL_FRACTION_BY_SIZE["small"]
        > SERIAL_FRACTION_BY_SIZE["medium"]
        > SERIAL_FRACTION_BY_SIZE["large"]
    )


# ---------------------------------------------------------------------------
# Dataset generation


def test_dataset_split_and_counts():
    params = default_params(Stage.ROUTING, "small", seed=3)
    ds = gen_dataset(250, params, seed=3)
    assert len(ds.samples) == 250
    assert len(ds.train_indices) == 200
    assert len(ds.test_indices) == 50
    assert not set(ds.train_indices) & set(ds.test_indices)
    # 4 labeled runtimes per design
    assert sum(len(s.runtimes) for s in ds.samples) == 1000


def test_dataset_deterministic():
    params = default_params(Stage.STA, "small", seed=9)
    a = gen_dataset(12, params, seed=9)
    b = gen_dataset(12, params, seed=9)
    assert a.train_indices == b.train_indices
    for s, t in zip(a.samples, b.samples):
        assert s.runtimes == t.runtimes
        assert dump_graph(s.graph) == dump_graph(t.graph)


def test_test_seeds_disjoint_from_train_seeds():
    params = default_params(Stage.ROUTING, "small", seed=1)
    ds = gen_dataset(20, params, seed=1)
    train_seeds = {ds.graph_seeds[i] for i in ds.train_indices}
    test_seeds = {ds.graph_seeds[i] for i in ds.test_indices}
    assert not train_seeds & test_seeds


def test_no_duplicate_graphs_in_dataset():
    params = default_params(Stage.ROUTING, "small", seed=2)
    ds = gen_dataset(15, params, seed=2)
    dumps = {dump_graph(s.graph) for s in ds.samples}
    assert len(dumps) == 15


def test_dataset_needs_ten_graphs():
    params = default_params(Stage.ROUTING, "small")
    with pytest.raises(ConfigurationError):
        gen_dataset(9, params, seed=0)


def test_samples_match_application_kind():
    syn = gen_dataset(10, default_params(Stage.SYNTHESIS, "small"), seed=0)
    assert all(s.graph.source_kind is SourceKind.AIG for s in syn.samples)
    rt = gen_dataset(10, default_params(Stage.ROUTING, "small"), seed=0)
    assert all(s.graph.source_kind is SourceKind.NETLIST for s in rt.samples)


def test_write_and_load_round_trip(tmp_path):
    params = default_params(Stage.PLACEMENT, "small", seed=4)
    ds = gen_dataset(10, params, seed=4)
    train_path, test_path = write_dataset(ds, tmp_path)
    train = load_samples(train_path)
    test = load_samples(test_path)
    assert len(train) == 8 and len(test) == 2
    original = ds.train_samples()
    for loaded, orig in zip(train, original):
        assert loaded.application is Stage.PLACEMENT
        assert loaded.runtimes == orig.runtimes
        assert dump_graph(loaded.graph) == dump_graph(orig.graph)
        np.testing.assert_array_equal(loaded.features, orig.features)


def test_load_samples_rejects_bad_records(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"graph": "missing.graph", "application": "routing"}\n')
    with pytest.raises(ConfigurationError):
        load_samples(path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ConfigurationError):
        load_samples(empty)

import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import diamond, fig2, full_chain
from ppaplan.generator import GeneratorError, GeneratorSpec, generate_random
from ppaplan.topology import (
    CORRELATED,
    FULL,
    MERGE,
    ONE_TO_ONE,
    SINK,
    SOURCE,
    SPLIT,
    Connection,
    OperatorSpec,
    PartitionEdge,
    Topology,
    TopologyError,
    load_topology,
    materialize,
    save_topology,
    split_task_id,
    task_id,
    validate,
)


def codes(topo):
    return {v.code for v in validate(topo)}


def test_fig2_is_valid_and_materializes():
    topo = fig2()
    assert validate(topo) == []
    tg = materialize(topo)
    assert tg.tasks[-1] == "O3#0"
    assert tg.inputs["O3#0"] == [[("O1#0", 1.0), ("O1#1", 2.0)], [("O2#0", 3.0), ("O2#1", 2.0)]]
    assert tg.output_rates["O3#0"] == pytest.approx(8.0)


def test_task_ids_round_trip():
    assert task_id("O2", 1) == "O2#1"
    assert split_task_id("O2#1") == ("O2", 1)


def test_full_chain_substream_count():
    # 2 sources x 2 middle tasks + 2 middle x 2 sink tasks
    tg = materialize(full_chain(2))
    assert len(tg.substreams) == 8


def test_full_edges_split_rates_evenly():
    tg = materialize(diamond())
    j0 = tg.inputs["J#0"]
    assert j0 == [[("A#0", 0.5), ("A#1", 1.0)], [("B#0", 1.5), ("B#1", 2.0)]]
    assert tg.output_rates["J#0"] == pytest.approx(5.0)


def test_selectivity_scales_output():
    ops = (OperatorSpec("S", 1, role=SOURCE), OperatorSpec("T", 1, role=SINK, selectivity=0.5))
    tg = materialize(Topology(ops, (PartitionEdge("S", "T", ONE_TO_ONE),), {"S#0": 4}))
    assert tg.output_rates["T#0"] == pytest.approx(2.0)


def test_weighted_connections():
    ops = (OperatorSpec("S", 1, role=SOURCE), OperatorSpec("T", 2, role=SINK))
    edge = PartitionEdge("S", "T", FULL, (Connection(0, (0, 1), (3.0, 1.0)),))
    tg = materialize(Topology(ops, (edge,), {"S#0": 8}))
    assert tg.output_rates["T#0"] == pytest.approx(6.0)
    assert tg.output_rates["T#1"] == pytest.approx(2.0)


def test_split_and_merge_wiring():
    ops = (
        OperatorSpec("S", 2, role=SOURCE),
        OperatorSpec("M", 4),
        OperatorSpec("T", 2, role=SINK),
    )
    edges = (PartitionEdge("S", "M", SPLIT), PartitionEdge("M", "T", MERGE))
    tg = materialize(Topology(ops, edges, {"S#0": 1, "S#1": 1}))
    assert [s.src for s in tg.substreams if s.dst == "M#3"] == ["S#1"]
    assert [s.src for s in tg.substreams if s.dst == "T#0"] == ["M#0", "M#1"]


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda t: replace(t, operators=t.operators + (t.operators[0],)), "duplicate-operator"),
        (lambda t: replace(t, operators=(replace(t.operators[0], parallelism=0),) + t.operators[1:]), "parallelism"),
        (lambda t: replace(t, edges=t.edges + (PartitionEdge("O3", "O3", FULL),)), "self-subscription"),
        (lambda t: replace(t, edges=t.edges + (PartitionEdge("O1", "X", FULL),)), "unknown-operator"),
        (lambda t: replace(t, edges=(PartitionEdge("O1", "O3", "shuffle"), t.edges[1])), "pattern"),
        (lambda t: replace(t, edges=t.edges[:1]), "dead-end"),
        (lambda t: replace(t, edges=(PartitionEdge("O1", "O3", ONE_TO_ONE), t.edges[1])), "cardinality-mismatch"),
        (lambda t: replace(t, source_rates={**t.source_rates, "O1#0": 0}), "source-rate"),
        (lambda t: replace(t, source_rates={**t.source_rates, "O3#0": 1}), "unknown-task"),
        (lambda t: replace(t, operators=t.operators[:2] + (replace(t.operators[2], role="internal"),)), "sink-count"),
    ],
)
def test_validate_reports_violations(mutate, code):
    topo = mutate(fig2())
    assert code in codes(topo)
    with pytest.raises(TopologyError):
        materialize(topo)


def test_cycle_detected():
    ops = (
        OperatorSpec("S", 1, role=SOURCE),
        OperatorSpec("A", 1),
        OperatorSpec("B", 1),
        OperatorSpec("T", 1, role=SINK),
    )
    edges = (
        PartitionEdge("S", "A", ONE_TO_ONE),
        PartitionEdge("A", "B", ONE_TO_ONE),
        PartitionEdge("B", "A", ONE_TO_ONE),
        PartitionEdge("B", "T", ONE_TO_ONE),
    )
    assert "cycle" in codes(Topology(ops, edges, {"S#0": 1}))


def test_bad_connection_map():
    ops = (OperatorSpec("S", 2, role=SOURCE), OperatorSpec("T", 2, role=SINK))
    edge = PartitionEdge("S", "T", FULL, (Connection(0, (0, 1)),))
    assert "connection-map" in codes(Topology(ops, (edge,), {"S#0": 1, "S#1": 1}))


def test_source_input_kind_is_normalized():
    assert OperatorSpec("S", 1, input_kind=CORRELATED, role=SOURCE).input_kind != CORRELATED


def test_json_round_trip(tmp_path):
    topo = generate_random(GeneratorSpec(skew="zipf", join_fraction=0.5, seed=3))
    path = tmp_path / "t.json"
    save_topology(topo, path)
    again = load_topology(path)
    assert again == topo
    assert again.digest() == topo.digest()
    assert json.loads(path.read_text())["version"] == 1


def test_unsupported_version():
    data = fig2().to_dict()
    data["version"] = 99
    with pytest.raises(TopologyError):
        Topology.from_dict(data)


def test_digest_changes_with_rates():
    topo = fig2()
    assert topo.digest() != topo.with_source_rates({**topo.source_rates, "O1#0": 5}).digest()


def test_subgraph_treats_cut_inputs_as_sources():
    tg = materialize(diamond())
    sub = tg.subgraph(["J", "K"])
    assert set(sub.source_tasks) == {"J#0", "J#1"}
    assert sub.sink_tasks == ("K#0",)


def test_generator_deterministic():
    spec = GeneratorSpec(skew="zipf", join_fraction=0.5, seed=11)
    assert generate_random(spec).dumps() == generate_random(spec).dumps()


@pytest.mark.parametrize(
    "bad",
    [
        GeneratorSpec(ops=(6, 5)),
        GeneratorSpec(par=(0, 2)),
        GeneratorSpec(join_fraction=1.5),
        GeneratorSpec(kind="weird"),
        GeneratorSpec(skew="pareto"),
        GeneratorSpec(ops=(1, 1)),
    ],
)
def test_generator_rejects_bad_specs(bad):
    with pytest.raises(GeneratorError):
        generate_random(bad)


def test_parse_skew():
    assert GeneratorSpec.parse_skew("zipf:0.3") == ("zipf", 0.3)
    with pytest.raises(GeneratorError):
        GeneratorSpec.parse_skew("zipf:x")


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    kind=st.sampled_from(["structured", "full", "mixed"]),
    skew=st.sampled_from(["uniform", "zipf"]),
    join=st.sampled_from([0.0, 0.5, 1.0]),
    lo=st.integers(1, 4),
    span=st.integers(0, 6),
)
def test_generator_always_valid(seed, kind, skew, join, lo, span):
    spec = GeneratorSpec(ops=(2, 8), par=(lo, lo + span), skew=skew, join_fraction=join, kind=kind, seed=seed)
    topo = generate_random(spec)
    assert validate(topo) == []
    tg = materialize(topo)
    assert len(tg.sink_tasks) >= 1
    if kind == "full":
        assert all(p == FULL for _, _, p in tg.op_edges)
    if kind == "structured":
        assert all(p != FULL or b == tg.sink_ops[0] for _, b, p in tg.op_edges)

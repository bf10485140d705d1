import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import diamond, fig2, full_chain
from ppaplan.fidelity import TreeCapExceeded, plan_fidelity
from ppaplan.generator import GeneratorSpec, generate_random
from ppaplan.planner import (
    NotFullError,
    NotStructuredError,
    PlanError,
    ReplicationPlan,
    decompose,
    plan_dp,
    plan_exhaustive,
    plan_full,
    plan_greedy,
    plan_structure_aware,
    plan_structured,
    replication_gains,
    split_units,
)
from ppaplan.planner.greedy import single_failure_fidelity
from ppaplan.planner.structured import is_structured, unit_boundaries
from ppaplan.topology import (
    CORRELATED,
    FULL,
    MERGE,
    ONE_TO_ONE,
    SINK,
    SOURCE,
    SPLIT,
    OperatorSpec,
    PartitionEdge,
    Topology,
    materialize,
)

FIG2_PLAN = {"O1#1", "O2#0", "O3#0"}


@pytest.mark.parametrize("planner", [plan_dp, plan_exhaustive, plan_greedy, plan_structure_aware])
def test_fig2_independent_r3(fig2_ind, planner):
    plan = planner(fig2_ind, 3)
    assert plan.tasks == FIG2_PLAN
    assert plan.objective == pytest.approx(0.625)
    assert plan.topology_digest == fig2_ind.digest


def test_greedy_scores(fig2_ind):
    a = single_failure_fidelity(fig2_ind)
    assert a == pytest.approx({"O3#0": 0.0, "O2#0": 0.625, "O1#1": 0.75, "O2#1": 0.75, "O1#0": 0.875})


@pytest.mark.parametrize("planner", [plan_dp, plan_exhaustive, plan_greedy, plan_structure_aware])
def test_zero_budget(fig2_corr, planner):
    plan = planner(fig2_corr, 0)
    assert plan.tasks == frozenset() and plan.objective == 0


def test_full_budget_gives_one(fig2_corr):
    for planner in (plan_dp, plan_exhaustive, plan_greedy, plan_structure_aware):
        assert planner(fig2_corr, 5).objective == pytest.approx(1.0)


def test_negative_budget(fig2_corr):
    with pytest.raises(PlanError):
        plan_dp(fig2_corr, -1)


def test_plan_json_round_trip(tmp_path, fig2_ind):
    plan = plan_dp(fig2_ind, 3)
    path = tmp_path / "p.json"
    plan.save(path)
    again = ReplicationPlan.load(path)
    assert again == plan


def test_plan_over_budget_rejected():
    with pytest.raises(PlanError):
        ReplicationPlan(frozenset({"a", "b"}), 1, 0.0)


def test_malformed_plan():
    with pytest.raises(PlanError):
        ReplicationPlan.from_dict({"tasks": []})


def test_dp_cap(fig2_ind):
    with pytest.raises(TreeCapExceeded):
        plan_dp(fig2_ind, 3, cap=1)


def test_diamond_dp_matches_oracle():
    tg = materialize(diamond())
    for r in range(len(tg.tasks) + 1):
        assert plan_dp(tg, r).objective == pytest.approx(plan_exhaustive(tg, r).objective, abs=1e-9)


def test_exhaustive_prefers_smaller_plans(fig2_corr):
    # three tasks already reach the best value for R=3; R=4 adds one more stream task
    p3 = plan_exhaustive(fig2_corr, 3)
    assert len(p3.tasks) == 3
    p4 = plan_exhaustive(fig2_corr, 4)
    assert p4.objective >= p3.objective


small = st.builds(
    GeneratorSpec,
    ops=st.just((2, 5)),
    par=st.sampled_from([(1, 2), (1, 3), (2, 3)]),
    skew=st.sampled_from(["uniform", "zipf"]),
    join_fraction=st.sampled_from([0.0, 0.5, 1.0]),
    kind=st.sampled_from(["structured", "full", "mixed"]),
    seed=st.integers(0, 10**6),
)


@settings(max_examples=40, deadline=None)
@given(small)
def test_dp_is_optimal(spec):
    tg = materialize(generate_random(spec))
    if len(tg.tasks) > 12:
        return
    for r in range(len(tg.tasks) + 1):
        assert plan_dp(tg, r).objective == pytest.approx(plan_exhaustive(tg, r).objective, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(small, st.floats(0, 1))
def test_planners_respect_budget(spec, ratio):
    tg = materialize(generate_random(spec))
    r = int(ratio * len(tg.tasks))
    for planner in (plan_dp, plan_greedy, plan_structure_aware):
        plan = planner(tg, r)
        assert len(plan.tasks) <= r
        assert plan.objective == pytest.approx(plan_fidelity(tg, plan.tasks))


# -- structured and full sub-planners --------------------------------------


def chain_structured():
    """S(2) -split-> A(4) -one-to-one-> B(4) -merge-> T(2)."""
    ops = (
        OperatorSpec("S", 2, role=SOURCE),
        OperatorSpec("A", 4),
        OperatorSpec("B", 4),
        OperatorSpec("T", 2, role=SINK),
    )
    edges = (PartitionEdge("S", "A", SPLIT), PartitionEdge("A", "B", ONE_TO_ONE), PartitionEdge("B", "T", MERGE))
    return Topology(ops, edges, {"S#0": 1, "S#1": 3})


def join_structured():
    ops = (
        OperatorSpec("L", 2, role=SOURCE),
        OperatorSpec("R", 2, role=SOURCE),
        OperatorSpec("J", 1, input_kind=CORRELATED),
        OperatorSpec("T", 1, role=SINK),
    )
    edges = (PartitionEdge("L", "J", MERGE), PartitionEdge("R", "J", MERGE), PartitionEdge("J", "T", ONE_TO_ONE))
    return Topology(ops, edges, {"L#0": 1, "L#1": 2, "R#0": 3, "R#1": 1})


def test_unit_boundaries_cut_joins():
    tg = materialize(join_structured())
    assert set(unit_boundaries(tg)) == {("L", "J"), ("R", "J")}
    units = split_units(tg)
    assert sorted(u.operators for u in units) == [("J", "T"), ("L",), ("R",)]


def test_structured_chain_is_one_unit():
    tg = materialize(chain_structured())
    assert is_structured(tg)
    assert len(split_units(tg)) == 1


@pytest.mark.parametrize("make", [chain_structured, join_structured])
def test_structured_planner_matches_oracle_at_tree_sizes(make):
    tg = materialize(make())
    for r in range(len(tg.tasks) + 1):
        got = plan_structured((), r, tg).objective
        best = plan_exhaustive(tg, r).objective
        assert got <= best + 1e-12
    # the whole topology fits the budget
    assert plan_structured((), len(tg.tasks), tg).objective == pytest.approx(1.0)


def test_structured_rejects_full_inside():
    with pytest.raises(NotStructuredError):
        split_units(materialize(full_chain(2)))


def test_full_planner():
    tg = materialize(full_chain(3))
    gains = replication_gains(tg)
    assert gains["A#2"] > gains["A#0"]
    plan = plan_full((), 3, tg)
    assert {t.split("#")[0] for t in plan.tasks} == {"A", "B", "C"}
    assert "A#2" in plan.tasks
    assert plan_full((), 2, tg).tasks == frozenset()
    assert plan_full((), 9, tg).objective == pytest.approx(1.0)


def test_full_planner_rejects_structured():
    with pytest.raises(NotFullError):
        plan_full((), 3, materialize(chain_structured()))


def test_decompose_mixed():
    ops = (
        OperatorSpec("S", 2, role=SOURCE),
        OperatorSpec("A", 2),
        OperatorSpec("B", 2),
        OperatorSpec("T", 1, role=SINK),
    )
    edges = (PartitionEdge("S", "A", ONE_TO_ONE), PartitionEdge("A", "B", FULL), PartitionEdge("B", "T", MERGE))
    tg = materialize(Topology(ops, edges, {"S#0": 1, "S#1": 1}))
    subs = decompose(tg)
    covered = sorted(op for s in subs for op in s.operators)
    assert covered == sorted(tg.operators)
    kinds = {s.operators: s.kind for s in subs}
    assert kinds[("B", "T")] == "structured"
    assert kinds[("S", "A")] == "structured"


def test_decompose_full():
    subs = decompose(materialize(full_chain(2)))
    assert len(subs) == 1 and subs[0].kind == "full"


def test_sa_guard_below_operator_count():
    tg = materialize(full_chain(3))
    assert plan_structure_aware(tg, 2).tasks == frozenset()


def test_sa_never_worse_than_greedy_on_average():
    gaps = []
    for seed in range(15):
        tg = materialize(generate_random(GeneratorSpec(par=(4, 8), seed=seed)))
        r = int(0.3 * len(tg.tasks))
        gaps.append(plan_structure_aware(tg, r).objective - plan_greedy(tg, r).objective)
    assert sum(gaps) / len(gaps) >= 0


def test_planners_are_deterministic():
    tg = materialize(generate_random(GeneratorSpec(par=(4, 8), join_fraction=0.5, seed=4)))
    r = len(tg.tasks) // 3
    assert plan_structure_aware(tg, r) == plan_structure_aware(tg, r)
    assert plan_greedy(tg, r) == plan_greedy(tg, r)


def _merge_before_split(g):
    order = {op: i for i, op in enumerate(g.operators)}
    merges = [order[b] for _, b, p in g.op_edges if p == MERGE]
    splits = [order[a] for a, _, p in g.op_edges if p == SPLIT]
    return any(m <= s for m in merges for s in splits)


def test_segment_count_on_chain_units():
    """A chain-shaped unit has as many segments as its widest operator has input substreams."""
    checked = 0
    for seed in range(150):
        tg = materialize(generate_random(GeneratorSpec(ops=(2, 8), par=(1, 8), kind="structured", seed=seed)))
        for unit in split_units(tg):
            g = unit.graph
            if any(p == FULL for *_, p in g.op_edges) or any(len(g.upstream_ops[o]) > 1 for o in g.operators):
                continue
            if _merge_before_split(g):
                continue
            width = max(
                [sum(len(s) for t in g.tasks_of(op) for s in g.inputs.get(t, [])) for op in g.operators]
                + [g.parallelism[op] for op in g.operators]
            )
            assert len(unit.segments) == width
            checked += 1
    assert checked > 50

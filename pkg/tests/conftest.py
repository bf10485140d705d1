import pytest

from ppaplan.topology import (
    CORRELATED,
    FULL,
    INDEPENDENT,
    MERGE,
    OperatorSpec,
    PartitionEdge,
    SINK,
    SOURCE,
    Topology,
    materialize,
)


def fig2(kind=CORRELATED):
    """Two 2-task sources merged into a single sink task (rates 1,2 and 3,2)."""
    return Topology(
        operators=(
            OperatorSpec("O1", 2, role=SOURCE),
            OperatorSpec("O2", 2, role=SOURCE),
            OperatorSpec("O3", 1, input_kind=kind, role=SINK),
        ),
        edges=(PartitionEdge("O1", "O3", MERGE), PartitionEdge("O2", "O3", MERGE)),
        source_rates={"O1#0": 1, "O1#1": 2, "O2#0": 3, "O2#1": 2},
    )


def diamond(kind=CORRELATED):
    """A(2), B(2) -> J(2) over Full edges -> K(1)."""
    return Topology(
        operators=(
            OperatorSpec("A", 2, role=SOURCE),
            OperatorSpec("B", 2, role=SOURCE),
            OperatorSpec("J", 2, input_kind=kind),
            OperatorSpec("K", 1, role=SINK),
        ),
        edges=(PartitionEdge("A", "J", FULL), PartitionEdge("B", "J", FULL), PartitionEdge("J", "K", FULL)),
        source_rates={"A#0": 1, "A#1": 2, "B#0": 3, "B#1": 4},
    )


def full_chain(par=2, rates=None):
    rates = rates or {f"A#{i}": float(i + 1) for i in range(par)}
    return Topology(
        operators=(
            OperatorSpec("A", par, role=SOURCE),
            OperatorSpec("B", par),
            OperatorSpec("C", par, role=SINK),
        ),
        edges=(PartitionEdge("A", "B", FULL), PartitionEdge("B", "C", FULL)),
        source_rates=rates,
    )


@pytest.fixture
def fig2_corr():
    return materialize(fig2(CORRELATED))


@pytest.fixture
def fig2_ind():
    return materialize(fig2(INDEPENDENT))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])

import pytest

from longitudinal_gc.engine.graph_ops import CausalGraph
from longitudinal_gc.engine.simgen import GroundTruthGraph
from longitudinal_gc.evaluation.metrics import RESULT_COLUMNS, result_row, score
from longitudinal_gc.errors import GraphError

NODES = ("a", "b", "c")


def pred(*edges, nodes=NODES):
    return CausalGraph(nodes, {e: 1.0 for e in edges})


def truth(*edges, nodes=NODES):
    return GroundTruthGraph(nodes, edges)


# -----------------------------
# Constructed Cases
# -----------------------------

@pytest.mark.parametrize(
    "predicted, true_edges, expected",
    [
        ([("a", "b"), ("b", "c")], [("a", "b"), ("b", "c")], (1.0, 1.0, 1.0)),
        ([("b", "a")], [("a", "b")], (0.0, 0.0, 0.0)),
        ([("a", "b"), ("b", "a")], [("a", "b")], (0.5, 1.0, 2 / 3)),
        ([], [("a", "b")], (0.0, 0.0, 0.0)),
        ([("a", "b")], [("a", "b"), ("b", "c")], (1.0, 0.5, 2 / 3)),
        ([("a", "b"), ("a", "c")], [("a", "b")], (0.5, 1.0, 2 / 3)),
        ([("a", "b"), ("c", "b")], [("a", "b"), ("b", "c")], (0.5, 0.5, 0.5)),
        ([("a", "b"), ("b", "c"), ("a", "c")], [("a", "b"), ("b", "c"), ("a", "c")], (1.0, 1.0, 1.0)),
        ([("a", "c"), ("c", "a"), ("b", "a")], [("a", "b"), ("b", "c"), ("a", "c")], (1 / 3, 1 / 3, 1 / 3)),
        ([("a", "b")], [], (0.0, 0.0, 0.0)),
        ([], [], (1.0, 1.0, 1.0)),
    ],
)
def test_directed_scores(predicted, true_edges, expected):
    result = score(pred(*predicted), truth(*true_edges))
    assert (result.precision, result.recall, result.f1) == pytest.approx(expected)


def test_ledger_classifies_every_edge():
    result = score(pred(("b", "a"), ("a", "c")), truth(("a", "b"), ("b", "c")))
    assert result.counts == {"correct": 0, "reversed": 1, "spurious": 1, "missed": 2}
    frame = result.ledger_frame()
    assert list(frame.columns) == ["cause", "effect", "status"]
    assert len(frame) == 4


def test_node_set_mismatch_rejected():
    with pytest.raises(GraphError):
        score(pred(("a", "b"), nodes=("a", "b")), truth(("a", "b")))


def test_scores_do_not_depend_on_node_labels():
    mapping = {"a": "q", "b": "r", "c": "p"}
    predicted = [("a", "b"), ("c", "b"), ("a", "c")]
    true_edges = [("a", "b"), ("b", "c")]
    original = score(pred(*predicted), truth(*true_edges))
    nodes = tuple(mapping[n] for n in NODES)
    relabeled = score(
        pred(*[(mapping[u], mapping[v]) for u, v in predicted], nodes=nodes),
        truth(*[(mapping[u], mapping[v]) for u, v in true_edges], nodes=nodes),
    )
    assert (relabeled.precision, relabeled.recall, relabeled.f1) == \
        (original.precision, original.recall, original.f1)


def test_result_row_layout():
    row = result_row("chain3-lag1", "linear", score(pred(("a", "b")), truth(("a", "b"))), 1.23456)
    assert list(row) == RESULT_COLUMNS
    assert row["runtime_seconds"] == 1.235

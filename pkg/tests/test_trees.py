import json

import numpy as np
import pytest

from relu_compiler.errors import (
    AmbiguousForest,
    DimensionMismatch,
    InconsistentDims,
    InvariantViolation,
    OnHyperplane,
    ParseError,
)
from relu_compiler.geometry import Hyperplane, Side
from relu_compiler.trees import (
    Forest,
    Internal,
    Leaf,
    LinearDecisionTree,
    forest_from_dict,
    forest_to_dict,
    is_forest_document,
    load_forest,
    load_tree,
    oracle_forest_predict,
    save_forest,
    save_tree,
    tree_from_dict,
    tree_to_dict,
)

SPLIT = Hyperplane([1.0, 0.0], 0.0)


def test_missing_child():
    with pytest.raises(InvariantViolation):
        LinearDecisionTree({0: Internal(SPLIT, 1, 2), 1: Leaf(1)}, 0, 2)


def test_shared_child():
    with pytest.raises(InvariantViolation):
        LinearDecisionTree({0: Internal(SPLIT, 1, 1), 1: Leaf(1)}, 0, 2)


def test_cycle():
    nodes = {0: Internal(SPLIT, 1, 2), 1: Internal(SPLIT, 0, 3), 2: Leaf(0), 3: Leaf(1)}
    with pytest.raises(InvariantViolation):
        LinearDecisionTree(nodes, 0, 2)


def test_unreachable_node():
    nodes = {0: Internal(SPLIT, 1, 2), 1: Leaf(1), 2: Leaf(0), 9: Leaf(1)}
    with pytest.raises(InvariantViolation):
        LinearDecisionTree(nodes, 0, 2)


def test_bad_label():
    with pytest.raises(InvariantViolation):
        LinearDecisionTree({0: Leaf(2)}, 0, 2)


def test_split_dimension():
    with pytest.raises(DimensionMismatch):
        LinearDecisionTree({0: Internal(SPLIT, 1, 2), 1: Leaf(1), 2: Leaf(0)}, 0, 3)


def test_shape(corner_tree):
    assert corner_tree.depth == 2
    assert corner_tree.node_depth("r_up") == 2
    assert corner_tree.leaves() == ["r_up", "r_down", "l_far", "l_near"]
    assert corner_tree.internal_nodes() == ["root", "right", "left"]


def test_path_and_predict(corner_tree):
    assert corner_tree.path([1.0, 1.0]) == [("root", Side.POSITIVE), ("right", Side.POSITIVE)]
    assert corner_tree.route([1.0, -1.0]) == "r_down"
    assert corner_tree.predict([-1.0, -1.0]) == 1
    assert corner_tree.predict([-0.2, 0.5]) == 0
    with pytest.raises(OnHyperplane):
        corner_tree.predict([0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        corner_tree.path([1.0])


def test_batch_routing_matches_pointwise(corner_tree, rng):
    X = rng.uniform(-2.0, 2.0, size=(300, 2))
    expected = [corner_tree.predict(x) for x in X]
    assert corner_tree.predict_batch(X).tolist() == expected
    _, leaves = corner_tree.route_batch(X)
    assert list(leaves) == [corner_tree.route(x) for x in X]


def test_batch_routing_marks_points_on_splits(corner_tree):
    labels = corner_tree.predict_batch([[0.0, 1.0], [1.0, 1.0]])
    assert labels.tolist() == [-1, 1]


def test_depth_zero_tree():
    tree = LinearDecisionTree({"only": Leaf(1)}, "only", 3)
    assert tree.depth == 0
    assert tree.path([0.0, 0.0, 0.0]) == []
    assert tree.predict([5.0, 5.0, 5.0]) == 1
    assert tree.predict_batch(np.zeros((2, 3))).tolist() == [1, 1]


def test_tree_document_round_trip(tmp_path, corner_tree):
    path = save_tree(corner_tree, str(tmp_path / "tree.json"))
    again = load_tree(path)
    assert tree_to_dict(again) == tree_to_dict(corner_tree)
    assert again.predict([-1.0, -1.0]) == 1


def test_tree_document_errors():
    with pytest.raises(ParseError):
        tree_from_dict({"input_dim": 2, "root": 0})
    with pytest.raises(ParseError):
        tree_from_dict({"input_dim": 2, "root": 0, "nodes": [{"id": 0, "leaf": 3}]})
    with pytest.raises(ParseError):
        tree_from_dict({"input_dim": 2, "root": 0, "nodes": [{"id": 0, "leaf": 1}, {"id": 0, "leaf": 0}]})
    with pytest.raises(ParseError):
        tree_from_dict({"input_dim": 2, "root": 0, "nodes": [{"id": 0, "pos": 1, "zero": 2}]})


def test_load_tree_reports_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "input_dim": 2,\n  "root": \n')
    with pytest.raises(ParseError) as err:
        load_tree(str(path))
    assert err.value.line is not None


def test_forest_validation(split_forest):
    trees = split_forest.trees
    with pytest.raises(InvariantViolation):
        Forest(trees[:2], 3)
    other = LinearDecisionTree({0: Internal(SPLIT, 1, 2), 1: Leaf(1), 2: Leaf(0)}, 0, 2)
    with pytest.raises(InconsistentDims):
        Forest([trees[0], trees[1], (2, other)], 3)


def test_forest_accepts_any_order(split_forest):
    shuffled = Forest(list(reversed(split_forest.trees)), 3)
    assert [c for c, _ in shuffled.trees] == [0, 1, 2]
    assert shuffled.depth == 2
    assert shuffled.input_dim == 1


def test_forest_oracle(split_forest):
    assert oracle_forest_predict(split_forest, [-2.0]) == 0
    assert oracle_forest_predict(split_forest, [0.0]) == 1
    assert oracle_forest_predict(split_forest, [3.0]) == 2


def test_forest_oracle_ambiguous():
    claims_all = LinearDecisionTree({0: Leaf(1)}, 0, 1)
    forest = Forest([(0, claims_all), (1, claims_all)], 2)
    with pytest.raises(AmbiguousForest):
        oracle_forest_predict(forest, [0.0])


def test_forest_document_round_trip(tmp_path, split_forest):
    path = save_forest(split_forest, str(tmp_path / "forest.json"))
    with open(path) as f:
        assert is_forest_document(json.load(f))
    again = load_forest(path)
    assert forest_to_dict(again) == forest_to_dict(split_forest)
    with pytest.raises(ParseError):
        forest_from_dict({"trees": []})

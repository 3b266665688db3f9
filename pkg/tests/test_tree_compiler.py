import numpy as np
import pytest

from relu_compiler.datasets import random_oblique_tree
from relu_compiler.errors import CalibrationOnSplit, DimensionMismatch, InconsistentDims, LabelMismatch
from relu_compiler.geometry import Hyperplane, LabeledPoints
from relu_compiler.network import forward_batch, layer_outputs, predict_class
from relu_compiler.tree_compiler import (
    assemble_forest,
    assemble_tree,
    compile_forest,
    compile_tree,
    margin_ok,
    path_hyperplanes,
)
from relu_compiler.trees import Internal, Leaf, LinearDecisionTree
from relu_compiler.verify import mutual_exclusivity, readout_labels


def test_stump_compiles_exactly(stump, stump_data):
    net = compile_tree(stump, stump_data)
    assert len(net.layers) == 2
    assert net.widths == [4, 1]
    out = forward_batch(net, stump_data.points)[:, 0]
    assert readout_labels(out).tolist() == [1, 1, 0, 0]
    assert np.all(out[2:] == 0.0)


def test_depth_two_tree(corner_tree, corner_data):
    assembly = assemble_tree(corner_tree, corner_data)
    net = assembly.network
    assert len(net.layers) == corner_tree.depth + 1
    assert net.widths == [4, 8, 1]
    assert readout_labels(forward_batch(net, corner_data.points)[:, 0]).tolist() == corner_data.labels.tolist()
    assert np.all(mutual_exclusivity(assembly, corner_data.points))


def test_unbalanced_tree_widths():
    # leaf 2 stops after one split, leaf 5 after two, leaves 6 and 7 after three
    nodes = {
        1: Internal(Hyperplane([1.0, 0.0], 0.0), 3, 2),
        3: Internal(Hyperplane([0.0, 1.0], 0.0), 4, 5),
        4: Internal(Hyperplane([1.0, 0.0], -0.5), 6, 7),
        2: Leaf(0), 5: Leaf(1), 6: Leaf(1), 7: Leaf(0),
    }
    tree = LinearDecisionTree(nodes, 1, 2)
    X = np.array([[-0.5, 0.3], [-0.7, -0.6], [0.25, -0.5], [0.8, -0.4],
                  [0.8, 0.5], [0.9, 0.2], [0.25, 0.5], [0.1, 0.8]])
    data = LabeledPoints(X, tree.predict_batch(X))
    assert data.labels.tolist() == [0, 0, 1, 1, 1, 1, 0, 0]
    assembly = assemble_tree(tree, data)
    assert assembly.network.widths == [4, 5, 6, 1]
    assert len(assembly.network.layers) == 4
    assert readout_labels(forward_batch(assembly.network, X)[:, 0]).tolist() == data.labels.tolist()


def test_sibling_bundles_are_negations(corner_tree, corner_data):
    assembly = assemble_tree(corner_tree, corner_data)
    first = assembly.network.layers[1]
    pos = assembly.block(2, "r_up")
    zero = assembly.block(2, "r_down")
    assert np.array_equal(first.biases[pos.start:pos.stop], -first.biases[zero.start:zero.stop])
    parent = assembly.block(1, "right")
    cols = slice(parent.start, parent.stop)
    assert np.array_equal(first.weights[pos.start:pos.stop, cols], -first.weights[zero.start:zero.stop, cols])


def test_untaken_branch_stays_zero(corner_tree, corner_data):
    assembly = assemble_tree(corner_tree, corner_data)
    X = corner_data.points
    hidden = layer_outputs(assembly.network, X)[1]
    left = [assembly.block(2, leaf) for leaf in ("l_far", "l_near")]
    went_right = X[:, 0] > 0
    for b in left:
        assert np.all(hidden[went_right, b.start:b.stop] == 0.0)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_random_trees_agree_on_calibration(n):
    for seed in range(3):
        tree, data = random_oblique_tree(n, 4, 120, np.random.default_rng(100 * n + seed))
        assembly = assemble_tree(tree, data)
        out = forward_batch(assembly.network, data.points)[:, 0]
        assert readout_labels(out).tolist() == data.labels.tolist()
        assert len(assembly.network.layers) == tree.depth + 1


def test_random_tree_agreement_after_margin_filter():
    tree, data = random_oblique_tree(3, 4, 200, np.random.default_rng(5))
    assembly = assemble_tree(tree, data)
    X = np.random.default_rng(6).uniform(-1.2, 1.2, size=(20_000, 3))
    keep = margin_ok(assembly, X)
    assert keep.any()
    predicted = readout_labels(forward_batch(assembly.network, X[keep])[:, 0])
    expected = tree.predict_batch(X[keep])
    assert np.mean(predicted == expected) >= 0.999


def test_depth_zero_tree_is_constant():
    tree = LinearDecisionTree({0: Leaf(1)}, 0, 2)
    net = compile_tree(tree, LabeledPoints(np.zeros((0, 2)), []))
    assert len(net.layers) == 1
    assert forward_batch(net, [[3.0, -7.0]])[0, 0] == 1.0


def test_calibration_on_split(stump):
    with pytest.raises(CalibrationOnSplit):
        compile_tree(stump, LabeledPoints([[0.0, 1.0]], [0]))


def test_label_mismatch(stump):
    with pytest.raises(LabelMismatch):
        compile_tree(stump, LabeledPoints([[1.0, 1.0]], [0]))


def test_calibration_width(stump):
    with pytest.raises(DimensionMismatch):
        compile_tree(stump, LabeledPoints([[1.0, 1.0, 1.0]], [1]))


def test_padding_to_greater_depth(stump, stump_data):
    assembly = assemble_tree(stump, stump_data, depth=3)
    assert len(assembly.network.layers) == 4
    out = forward_batch(assembly.network, stump_data.points)[:, 0]
    assert readout_labels(out).tolist() == [1, 1, 0, 0]
    with pytest.raises(ValueError):
        assemble_tree(stump, stump_data, depth=0)


def test_path_hyperplanes(corner_tree, corner_data):
    assembly = assemble_tree(corner_tree, corner_data)
    planes = path_hyperplanes(assembly, [1.0, 1.0])
    assert len(planes) == 4
    assert planes[0] == corner_tree.nodes["root"].split


def test_forest_argmax(split_forest, split_forest_data):
    assembly = assemble_forest(split_forest, split_forest_data)
    net = assembly.network
    assert net.output_dim == 3
    assert predict_class(net, split_forest_data.points).tolist() == split_forest_data.labels.tolist()
    X = np.linspace(-4.0, 4.0, 81).reshape(-1, 1)
    keep = margin_ok(assembly, X)
    expected = np.where(X[:, 0] < -1, 0, np.where(X[:, 0] > 1, 2, 1))
    assert np.array_equal(predict_class(net, X[keep]), expected[keep])


def test_forest_rejects_wrong_width(split_forest):
    with pytest.raises(InconsistentDims):
        compile_forest(split_forest, (np.zeros((2, 2)), [0, 1]))

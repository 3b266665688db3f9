import numpy as np
import pytest

from relu_compiler.geometry import Hyperplane, Hyperrectangle, LabeledPoints
from relu_compiler.haar import HaarFunction
from relu_compiler.network import Activation, Layer, Network
from relu_compiler.trees import Forest, Internal, Leaf, LinearDecisionTree


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def abs_net():
    """|x| as relu(x) + relu(-x)."""
    hidden = Layer([[1.0], [-1.0]], [0.0, 0.0], Activation.relu())
    out = Layer([[1.0, 1.0]], [0.0], Activation.linear())
    return Network(1, (hidden, out), "absolute value")


@pytest.fixture
def stump():
    """x > 0 -> 1."""
    nodes = {0: Internal(Hyperplane([1.0, 0.0], 0.0), 1, 2), 1: Leaf(1), 2: Leaf(0)}
    return LinearDecisionTree(nodes, 0, 2)


@pytest.fixture
def stump_data():
    return LabeledPoints([[1.0, 0.5], [0.5, -1.0], [-1.0, 0.0], [-0.5, 2.0]], [1, 1, 0, 0])


@pytest.fixture
def corner_tree():
    """Depth 2: label 1 on x > 0 and y > 0, plus on x < 0 and x + y < -1."""
    nodes = {
        "root": Internal(Hyperplane([1.0, 0.0], 0.0), "right", "left"),
        "right": Internal(Hyperplane([0.0, 1.0], 0.0), "r_up", "r_down"),
        "left": Internal(Hyperplane([-1.0, -1.0], -1.0), "l_far", "l_near"),
        "r_up": Leaf(1), "r_down": Leaf(0), "l_far": Leaf(1), "l_near": Leaf(0),
    }
    return LinearDecisionTree(nodes, "root", 2)


@pytest.fixture
def corner_data(corner_tree):
    rng = np.random.default_rng(7)
    X = rng.uniform(-2.0, 2.0, size=(400, 2))
    near = (np.abs(X[:, 0]) < 0.05) | (np.abs(X[:, 1]) < 0.05) | (np.abs(X[:, 0] + X[:, 1] + 1.0) < 0.05)
    X = X[~near][:200]
    return LabeledPoints(X, corner_tree.predict_batch(X))


@pytest.fixture
def two_cells():
    return HaarFunction([
        (Hyperrectangle([0.0, 0.0], [0.5, 1.0]), 1.0),
        (Hyperrectangle([0.5, 0.0], [1.0, 1.0]), 4.0),
    ])


@pytest.fixture
def split_forest():
    """Three classes on the line: x < -1, -1 < x < 1, x > 1."""
    left, right = Hyperplane([-1.0], -1.0), Hyperplane([1.0], -1.0)

    def tree(labels):
        nodes = {0: Internal(left, 1, 2), 1: Leaf(labels[0]),
                 2: Internal(right, 3, 4), 3: Leaf(labels[2]), 4: Leaf(labels[1])}
        return LinearDecisionTree(nodes, 0, 1)

    trees = [(0, tree((1, 0, 0))), (1, tree((0, 1, 0))), (2, tree((0, 0, 1)))]
    return Forest(trees, 3)


@pytest.fixture
def split_forest_data():
    X = np.array([[-3.0], [-1.5], [-0.5], [0.0], [0.7], [1.4], [2.5]])
    return LabeledPoints(X, [0, 0, 1, 1, 1, 2, 2])

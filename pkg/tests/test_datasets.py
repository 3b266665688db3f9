import numpy as np
import pytest

from relu_compiler.datasets import (
    adjacent_pair,
    random_forest_instance,
    random_haar_grid,
    random_oblique_tree,
    read_calibration_csv,
    three_cluster_forest,
    write_calibration_csv,
)
from relu_compiler.errors import ParseError
from relu_compiler.trees import Internal, Leaf, oracle_forest_predict


def test_calibration_csv_round_trip(tmp_path, corner_data):
    path = write_calibration_csv(str(tmp_path / "calib.csv"), corner_data)
    again = read_calibration_csv(path, 2)
    assert np.allclose(again.points, corner_data.points, rtol=0.0, atol=1e-12)
    assert again.labels.tolist() == corner_data.labels.tolist()


def test_read_calibration_csv_errors(tmp_path):
    path = tmp_path / "calib.csv"
    path.write_text("0.5,1.0,1\n0.2,abc,0\n")
    with pytest.raises(ParseError) as err:
        read_calibration_csv(str(path))
    assert err.value.line == 2

    path.write_text("0.5,1.0,1\n0.2,0.3,0.5\n")
    with pytest.raises(ParseError) as err:
        read_calibration_csv(str(path))
    assert err.value.line == 2

    path.write_text("0.5,1.0,1\n")
    with pytest.raises(ParseError):
        read_calibration_csv(str(path), dim=3)


def test_read_empty_calibration(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    data = read_calibration_csv(str(path), 2)
    assert len(data) == 0
    assert data.points.shape == (0, 2)


def test_random_tree_instance():
    tree, data = random_oblique_tree(3, 4, 150, np.random.default_rng(3))
    assert tree.input_dim == 3
    assert tree.depth <= 4
    assert len(data) == 150
    assert np.all(np.abs(data.points) <= 1.0)
    assert set(data.labels.tolist()) <= {0, 1}
    assert data.labels.tolist() == [tree.predict(x) for x in data.points]
    for x in data.points:
        for node_id, _ in tree.path(x):
            assert tree.nodes[node_id].split.distance(x) >= 0.005


def test_random_tree_calibration_near_splits():
    tree, data = random_oblique_tree(2, 4, 200, np.random.default_rng(9))
    visits, _ = tree.route_batch(data.points)
    nearest = {node_id: tree.nodes[node_id].split.distance(data.points[rows]).min()
               for node_id, (rows, _, _) in visits.items()}
    assert 0.005 <= nearest[tree.root] <= 0.01
    assert min(nearest.values()) >= 0.005


def test_random_tree_sibling_leaves_differ():
    tree, _ = random_oblique_tree(2, 5, 50, np.random.default_rng(11))
    for node in tree.nodes.values():
        if isinstance(node, Internal):
            pos, zero = tree.nodes[node.pos], tree.nodes[node.zero]
            if isinstance(pos, Leaf) and isinstance(zero, Leaf):
                assert pos.label != zero.label


def test_random_tree_is_seeded():
    a = random_oblique_tree(2, 3, 40, np.random.default_rng(5))
    b = random_oblique_tree(2, 3, 40, np.random.default_rng(5))
    assert np.array_equal(a[1].points, b[1].points)


def test_random_forest_instance():
    forest, data = random_forest_instance(3, 3, 3, 120, np.random.default_rng(8))
    assert forest.class_count == 3
    assert forest.depth == 3
    assert len(data) == 120
    assert set(data.labels.tolist()) <= {0, 1, 2}
    for x, label in zip(data.points[:20], data.labels[:20]):
        assert oracle_forest_predict(forest, x) == label
    with pytest.raises(ValueError):
        random_forest_instance(2, 5, 2, 10, np.random.default_rng(0))


def test_three_cluster_forest():
    forest, data = three_cluster_forest(90, np.random.default_rng(1))
    assert len(data) == 90
    for x, label in zip(data.points, data.labels):
        assert oracle_forest_predict(forest, x) == label


def test_random_haar_grid():
    f = random_haar_grid(7, np.random.default_rng(2))
    assert len(f) == 7
    assert f.min_side() == pytest.approx(0.2)
    assert np.all((f.values >= -5.0) & (f.values <= 5.0))
    with pytest.raises(ValueError):
        random_haar_grid(26, np.random.default_rng(2))


def test_random_haar_grid_centered():
    plain = random_haar_grid(7, np.random.default_rng(2))
    centered = random_haar_grid(7, np.random.default_rng(2), centered=True)
    mid = (plain.values.max() + plain.values.min()) / 2.0
    assert centered.values == pytest.approx(plain.values - mid)
    assert centered.values.max() + centered.values.min() == pytest.approx(0.0, abs=1e-12)


def test_adjacent_pair():
    f = adjacent_pair()
    assert f.values.tolist() == [1.0, 4.0]
    assert f.boxes[0].gap_to(f.boxes[1]) == 0.0

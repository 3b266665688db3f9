"""Calibration CSV files and the seeded instance generators."""
import logging
import re
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ParseError
from .geometry import Hyperplane, Hyperrectangle, LabeledPoints
from .haar import HaarFunction
from .trees import Forest, Internal, Leaf, LinearDecisionTree

logger = logging.getLogger(__name__)

MAX_DRAW_ROUNDS = 200
BOUNDARY_POINTS_PER_NODE = 3


def read_calibration_csv(path: str, dim: Optional[int] = None) -> LabeledPoints:
    """One point per row, label in the last column, no header."""
    try:
        df = pd.read_csv(path, header=None, skip_blank_lines=True, dtype=str)
    except pd.errors.EmptyDataError:
        return LabeledPoints(np.zeros((0, dim or 0)), np.zeros(0, dtype=int))
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError("row has the wrong number of fields", line=int(match.group(1)) if match else None)

    numeric = df.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad_rows = numeric.isna().any(axis=1).to_numpy()
    if bad_rows.any():
        row = int(np.argmax(bad_rows))
        raise ParseError("row has a missing or non-numeric field", line=row + 1)
    if dim is not None and numeric.shape[1] != dim + 1:
        raise ParseError(f"expected {dim + 1} fields per row, found {numeric.shape[1]}", line=1)

    values = numeric.to_numpy(dtype=float)
    labels = values[:, -1]
    if np.any(labels != np.round(labels)):
        row = int(np.argmax(labels != np.round(labels)))
        raise ParseError("label must be an integer", line=row + 1)
    logger.debug("read %d calibration rows from %s", values.shape[0], path)
    return LabeledPoints(values[:, :-1], labels.astype(int))


def write_calibration_csv(path: str, data: LabeledPoints) -> str:
    df = pd.DataFrame(data.points)
    df[data.points.shape[1]] = data.labels
    df.to_csv(path, header=False, index=False)
    return path


def _random_split(rng: np.random.Generator, n: int, spread: float) -> Hyperplane:
    normal = rng.normal(size=n)
    normal /= np.linalg.norm(normal)
    anchor = rng.uniform(-spread, spread, size=n)
    return Hyperplane(normal, -float(normal @ anchor))


def _grow(rng, n, depth, full, spread, early_stop) -> Tuple[dict, List[int]]:
    """Random oblique partition; returns nodes (leaves unlabelled) and leaf ids in BFS order."""
    nodes, leaves = {}, []
    frontier = [(0, 0)]
    next_id = 1
    while frontier:
        grown = []
        for node_id, d in frontier:
            stop = d == depth or (not full and d > 0 and rng.random() < early_stop)
            if stop:
                nodes[node_id] = None
                leaves.append(node_id)
                continue
            pos, zero = next_id, next_id + 1
            next_id += 2
            nodes[node_id] = Internal(_random_split(rng, n, spread), pos, zero)
            grown.extend([(pos, d + 1), (zero, d + 1)])
        frontier = grown
    return nodes, leaves


def _clear_of_splits(tree: LinearDecisionTree, X: np.ndarray, margin: float):
    """Rows that reach a leaf keeping ``margin`` from every split on their path, plus the visits."""
    visits, leaves = tree.route_batch(X)
    ok = np.array([leaf is not None for leaf in leaves], dtype=bool)
    for node_id, (rows, _, _) in visits.items():
        near = tree.nodes[node_id].split.distance(X[rows]) < margin
        ok[rows[near]] = False
    return ok, visits


def _boundary_points(tree: LinearDecisionTree, rng, box: float, margin: float,
                     per_node: int = BOUNDARY_POINTS_PER_NODE) -> np.ndarray:
    """Points between ``margin`` and ``2 * margin`` from each split, on either side.

    Uniform points reaching a node are moved onto its split and pushed back out;
    only those still reaching the node and clear of every split are kept.
    """
    found = []
    for node_id in tree.internal_nodes():
        split = tree.nodes[node_id].split
        unit = split.normal / np.linalg.norm(split.normal)
        batch = rng.uniform(-box, box, size=(256, tree.input_dim))
        visits, _ = tree.route_batch(batch)
        if node_id not in visits:
            continue
        X = batch[visits[node_id][0]]
        along = split.value(X) / np.linalg.norm(split.normal)
        push = rng.choice([-1.0, 1.0], size=X.shape[0]) * rng.uniform(margin, 2 * margin, size=X.shape[0])
        moved = X + (push - along)[:, None] * unit
        inside = np.all(np.abs(moved) <= box, axis=1)
        ok, moved_visits = _clear_of_splits(tree, moved, margin)
        reach = np.zeros(moved.shape[0], dtype=bool)
        if node_id in moved_visits:
            reach[moved_visits[node_id][0]] = True
        found.append(moved[inside & ok & reach][:per_node])
    if not found:
        return np.zeros((0, tree.input_dim))
    return np.concatenate(found, axis=0)


def _draw_with_margin(tree: LinearDecisionTree, count: int, rng, box: float, margin: float) -> np.ndarray:
    """``count`` points clear of the splits; some hug each split so companion wedges stay narrow."""
    edge = _boundary_points(tree, rng, box, margin)[:count // 2]
    kept, total = [edge], edge.shape[0]
    for _ in range(MAX_DRAW_ROUNDS):
        if total >= count:
            break
        batch = rng.uniform(-box, box, size=(max(4 * count, 64), tree.input_dim))
        ok, _ = _clear_of_splits(tree, batch, margin)
        kept.append(batch[ok])
        total += int(ok.sum())
    return np.concatenate(kept, axis=0)[:count]


def random_oblique_tree(n: int, depth: int, points: int, rng: np.random.Generator,
                        margin: float = 0.005, box: float = 1.0,
                        early_stop: float = 0.25) -> Tuple[LinearDecisionTree, LabeledPoints]:
    """Random oblique tree of depth <= ``depth`` plus calibration points it labels.

    Calibration points keep at least ``margin`` from every split on their path,
    and a few per internal node sit within ``2 * margin`` of its split.
    Sibling leaves always carry different labels.
    """
    skeleton, leaves = _grow(rng, n, depth, False, 0.5 * box, early_stop)
    nodes = dict(skeleton)
    for node_id, node in skeleton.items():
        if isinstance(node, Internal):
            flip = int(rng.integers(2))
            for child, label in ((node.pos, 1 - flip), (node.zero, flip)):
                if nodes[child] is None:
                    nodes[child] = Leaf(label)
    if nodes[0] is None:
        nodes[0] = Leaf(int(rng.integers(2)))
    tree = LinearDecisionTree(nodes, 0, n)
    X = _draw_with_margin(tree, points, rng, box, margin)
    labels = tree.predict_batch(X)
    return tree, LabeledPoints(X, labels)


def random_forest_instance(n: int, classes: int, depth: int, points: int, rng: np.random.Generator,
                           margin: float = 0.02, box: float = 1.0) -> Tuple[Forest, LabeledPoints]:
    """One shared oblique partition with per-leaf classes; tree c claims the leaves of class c."""
    if 2 ** depth < classes:
        raise ValueError(f"depth {depth} gives fewer than {classes} leaves")
    skeleton, leaves = _grow(rng, n, depth, True, 0.5 * box, 0.0)
    leaf_class = [i % classes for i in range(len(leaves))]
    rng.shuffle(leaf_class)
    owner = dict(zip(leaves, leaf_class))
    trees = []
    for c in range(classes):
        nodes = {k: (Leaf(int(owner[k] == c)) if v is None else v) for k, v in skeleton.items()}
        trees.append((c, LinearDecisionTree(nodes, 0, n)))
    forest = Forest(trees, classes)
    partition = forest.tree(0)
    X = _draw_with_margin(partition, points, rng, box, margin)
    _, reached = partition.route_batch(X)
    labels = np.array([owner[leaf] for leaf in reached], dtype=int)
    return forest, LabeledPoints(X, labels)


def three_cluster_forest(points: int, rng: np.random.Generator, spread: float = 0.5,
                         margin: float = 0.05) -> Tuple[Forest, LabeledPoints]:
    """Three 2-D Gaussian clusters separated by axis splits ``y = 1.5`` and ``x = 0``."""
    centers = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    top = Hyperplane([0.0, 1.0], -1.5)
    side_split = Hyperplane([1.0, 0.0], 0.0)

    def tree_for(c):
        leaf = {0: Leaf(int(c == 2)), 1: Leaf(int(c == 1)), 2: Leaf(int(c == 0))}
        nodes = {"root": Internal(top, "top", "bottom"), "top": leaf[0],
                 "bottom": Internal(side_split, "right", "left"), "right": leaf[1], "left": leaf[2]}
        return LinearDecisionTree(nodes, "root", 2)

    forest = Forest([(c, tree_for(c)) for c in range(3)], 3)
    kept_x, kept_y = [], []
    while sum(len(k) for k in kept_x) < points:
        cls = rng.integers(3, size=points)
        X = centers[cls] + rng.normal(scale=spread, size=(points, 2))
        above = top.value(X)
        right = side_split.value(X)
        region = np.where(above > 0, 2, np.where(right > 0, 1, 0))
        clear = (np.abs(above) >= margin) & ((above > 0) | (np.abs(right) >= margin))
        ok = clear & (region == cls)
        kept_x.append(X[ok])
        kept_y.append(cls[ok])
    X = np.concatenate(kept_x)[:points]
    y = np.concatenate(kept_y)[:points]
    return forest, LabeledPoints(X, y)


def random_haar_grid(m: int, rng: np.random.Generator, grid: int = 5,
                     low: float = -5.0, high: float = 5.0, centered: bool = False) -> HaarFunction:
    """``m`` distinct cells of a regular ``grid`` x ``grid`` partition of the unit square.

    With ``centered`` the values are shifted so their midrange is 0.
    """
    if not 1 <= m <= grid * grid:
        raise ValueError(f"cannot pick {m} cells from a {grid}x{grid} grid")
    picks = rng.choice(grid * grid, size=m, replace=False)
    side = 1.0 / grid
    cells = []
    for p in sorted(int(k) for k in picks):
        i, j = divmod(p, grid)
        lower = np.array([i * side, j * side])
        cells.append((Hyperrectangle(lower, lower + side), float(rng.uniform(low, high))))
    if centered:
        values = [v for _, v in cells]
        mid = (max(values) + min(values)) / 2.0
        cells = [(box, v - mid) for box, v in cells]
    return HaarFunction(cells)


def adjacent_pair() -> HaarFunction:
    """Two cells sharing the face x = 0.5, valued 1 and 4."""
    return HaarFunction([
        (Hyperrectangle([0.0, 0.0], [0.5, 1.0]), 1.0),
        (Hyperrectangle([0.5, 0.0], [1.0, 1.0]), 4.0),
    ])

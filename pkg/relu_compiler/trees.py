"""Oblique decision trees and one-vs-rest forests, plus their reference oracles.

Tree documents look like::

    {"input_dim": 2, "root": 1,
     "nodes": [{"id": 1, "split": {"normal": [1, 0], "offset": 0}, "pos": 2, "zero": 3},
               {"id": 2, "leaf": 1}, {"id": 3, "leaf": 0}]}

Node ids may be integers or strings. A forest document is
``{"class_count": C, "trees": [{"class": c, "tree": {...}}, ...]}``.
"""
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import (
    AmbiguousForest,
    DimensionMismatch,
    InconsistentDims,
    InvariantViolation,
    ParseError,
    ZeroNormal,
)
from .geometry import Hyperplane, Side, side
from .settings import compiler_config
from .utils import jsonify, parse_json

logger = logging.getLogger(__name__)

NodeId = Union[int, str]


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Internal:
    split: Hyperplane
    pos: NodeId
    zero: NodeId


class LinearDecisionTree:
    """Binary tree of oblique splits; ``pos`` takes the positive side."""

    def __init__(self, nodes: Dict[NodeId, Union[Leaf, Internal]], root: NodeId, input_dim: int):
        self.nodes = dict(nodes)
        self.root = root
        self.input_dim = int(input_dim)
        self._depths = self._validate()

    def _validate(self) -> Dict[NodeId, int]:
        if self.root not in self.nodes:
            raise InvariantViolation(f"root {self.root!r} is not a node")
        depths = {self.root: 0}
        stack = [self.root]
        while stack:
            node_id = stack.pop()
            node = self.nodes[node_id]
            if isinstance(node, Leaf):
                if node.label not in (0, 1):
                    raise InvariantViolation(f"leaf {node_id!r} has label {node.label}, expected 0 or 1")
                continue
            if node.split.dim != self.input_dim:
                raise DimensionMismatch(
                    f"node {node_id!r} splits in {node.split.dim}-D, tree input is {self.input_dim}-D")
            for child in (node.pos, node.zero):
                if child not in self.nodes:
                    raise InvariantViolation(f"node {node_id!r} points at missing child {child!r}")
                if child in depths:
                    raise InvariantViolation(f"node {child!r} is reached twice (cycle or shared child)")
                depths[child] = depths[node_id] + 1
                stack.append(child)
        unreachable = set(self.nodes) - set(depths)
        if unreachable:
            raise InvariantViolation(f"nodes not reachable from the root: {sorted(map(str, unreachable))}")
        return depths

    def node_depth(self, node_id: NodeId) -> int:
        return self._depths[node_id]

    @property
    def depth(self) -> int:
        return max(self._depths.values())

    def leaves(self) -> List[NodeId]:
        return [k for k in self.breadth_first() if isinstance(self.nodes[k], Leaf)]

    def internal_nodes(self) -> List[NodeId]:
        return [k for k in self.breadth_first() if isinstance(self.nodes[k], Internal)]

    def breadth_first(self) -> List[NodeId]:
        """Node ids level by level, pos child before zero child."""
        order, frontier = [], [self.root]
        while frontier:
            order.extend(frontier)
            nxt = []
            for node_id in frontier:
                node = self.nodes[node_id]
                if isinstance(node, Internal):
                    nxt.extend((node.pos, node.zero))
            frontier = nxt
        return order

    def path(self, x, tol: Optional[float] = None) -> List[Tuple[NodeId, Side]]:
        """Internal nodes visited by ``x`` and the side taken at each."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.input_dim:
            raise DimensionMismatch(f"point of width {x.shape[0]} for a {self.input_dim}-D tree")
        steps = []
        node_id = self.root
        while isinstance(self.nodes[node_id], Internal):
            node = self.nodes[node_id]
            taken = side(node.split, x, tol)
            steps.append((node_id, taken))
            node_id = node.pos if taken is Side.POSITIVE else node.zero
        return steps

    def route(self, x, tol: Optional[float] = None) -> NodeId:
        """Leaf reached by ``x``; raises OnHyperplane when a split is ambiguous."""
        steps = self.path(x, tol)
        if not steps:
            return self.root
        node_id, taken = steps[-1]
        node = self.nodes[node_id]
        return node.pos if taken is Side.POSITIVE else node.zero

    def predict(self, x, tol: Optional[float] = None) -> int:
        return self.nodes[self.route(x, tol)].label

    def route_batch(self, X, tol: Optional[float] = None):
        """Vectorised routing of the rows of ``X``.

        Returns ``(visits, leaves)``: ``visits[node] = (rows, positive, stuck)``
        for every internal node some row reaches, and the leaf id of every row.
        Rows within ``tol`` of a split stop there and get leaf ``None``.
        """
        tol = compiler_config.side_tol if tol is None else tol
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"points of width {X.shape[1]} for a {self.input_dim}-D tree")
        ids = self.breadth_first()
        index = {node_id: k for k, node_id in enumerate(ids)}
        at = np.zeros(X.shape[0], dtype=int)
        alive = np.ones(X.shape[0], dtype=bool)
        visits = {}
        for node_id in ids:
            node = self.nodes[node_id]
            if not isinstance(node, Internal):
                continue
            rows = np.flatnonzero(alive & (at == index[node_id]))
            if rows.size == 0:
                continue
            values = node.split.value(X[rows])
            positive = values > tol
            stuck = np.abs(values) <= tol
            visits[node_id] = (rows, positive, stuck)
            alive[rows[stuck]] = False
            at[rows] = np.where(positive, index[node.pos], index[node.zero])
        leaves = np.empty(X.shape[0], dtype=object)
        leaves[:] = [ids[k] if a else None for k, a in zip(at, alive)]
        return visits, leaves

    def predict_batch(self, X, tol: Optional[float] = None) -> np.ndarray:
        """Labels per row, -1 where a split is ambiguous."""
        _, leaves = self.route_batch(X, tol)
        return np.array([-1 if leaf is None else self.nodes[leaf].label for leaf in leaves], dtype=int)


class Forest:
    def __init__(self, trees: List[Tuple[int, LinearDecisionTree]], class_count: int):
        self.class_count = int(class_count)
        ordered = sorted(trees, key=lambda item: item[0])
        classes = [c for c, _ in ordered]
        if classes != list(range(self.class_count)):
            raise InvariantViolation(
                f"forest needs exactly one tree per class 0..{self.class_count - 1}, got {classes}")
        dims = {tree.input_dim for _, tree in ordered}
        if len(dims) > 1:
            raise InconsistentDims(f"forest trees disagree on input_dim: {sorted(dims)}")
        self.trees = ordered

    @property
    def input_dim(self) -> int:
        return self.trees[0][1].input_dim

    @property
    def depth(self) -> int:
        return max(tree.depth for _, tree in self.trees)

    def tree(self, class_id: int) -> LinearDecisionTree:
        return self.trees[class_id][1]


def oracle_tree_predict(tree: LinearDecisionTree, x, tol: Optional[float] = None) -> int:
    return tree.predict(x, tol)


def oracle_forest_predict(forest: Forest, x, tol: Optional[float] = None) -> int:
    """The one class whose tree claims ``x``."""
    claims = [c for c, tree in forest.trees if tree.predict(x, tol) == 1]
    if len(claims) != 1:
        raise AmbiguousForest(
            f"point {np.asarray(x).tolist()} is claimed by {len(claims)} trees {claims}")
    return claims[0]


def tree_to_dict(tree: LinearDecisionTree) -> dict:
    nodes = []
    for node_id in tree.breadth_first():
        node = tree.nodes[node_id]
        if isinstance(node, Leaf):
            nodes.append({"id": node_id, "leaf": node.label})
        else:
            nodes.append({"id": node_id, "split": node.split.to_dict(), "pos": node.pos, "zero": node.zero})
    return {"input_dim": tree.input_dim, "root": tree.root, "nodes": nodes}


def _node_id(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ParseError(f"node id must be an integer or string, got {value!r}", field=field)
    return value


def tree_from_dict(doc: dict) -> LinearDecisionTree:
    if not isinstance(doc, dict):
        raise ParseError("tree document must be an object")
    for key in ("input_dim", "root", "nodes"):
        if key not in doc:
            raise ParseError(f"tree document is missing '{key}'", field=key)
    if not isinstance(doc["nodes"], list):
        raise ParseError("nodes must be a list", field="nodes")
    nodes = {}
    for i, raw in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(raw, dict) or "id" not in raw:
            raise ParseError("node must be an object with an 'id'", field=where)
        node_id = _node_id(raw["id"], f"{where}.id")
        if node_id in nodes:
            raise ParseError(f"duplicate node id {node_id!r}", field=where)
        if "leaf" in raw:
            label = raw["leaf"]
            if isinstance(label, bool) or label not in (0, 1):
                raise ParseError(f"leaf label must be 0 or 1, got {label!r}", field=f"{where}.leaf")
            nodes[node_id] = Leaf(int(label))
            continue
        try:
            split = Hyperplane.from_dict(raw["split"])
            nodes[node_id] = Internal(split, _node_id(raw["pos"], f"{where}.pos"),
                                      _node_id(raw["zero"], f"{where}.zero"))
        except ZeroNormal:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"malformed internal node ({e})", field=where)
    return LinearDecisionTree(nodes, _node_id(doc["root"], "root"), doc["input_dim"])


def forest_to_dict(forest: Forest) -> dict:
    return {
        "class_count": forest.class_count,
        "trees": [{"class": c, "tree": tree_to_dict(tree)} for c, tree in forest.trees],
    }


def forest_from_dict(doc: dict) -> Forest:
    if not isinstance(doc, dict) or "class_count" not in doc or not isinstance(doc.get("trees"), list):
        raise ParseError("forest document needs 'class_count' and a 'trees' list")
    trees = []
    for i, raw in enumerate(doc["trees"]):
        if not isinstance(raw, dict) or "class" not in raw or "tree" not in raw:
            raise ParseError("forest entry needs 'class' and 'tree'", field=f"trees[{i}]")
        trees.append((int(raw["class"]), tree_from_dict(raw["tree"])))
    return Forest(trees, doc["class_count"])


def _load(path):
    with open(path, "rb") as f:
        try:
            return parse_json(f.read())
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON in {path}: {e.msg}", line=e.lineno)


def load_tree(path: str) -> LinearDecisionTree:
    return tree_from_dict(_load(path))


def load_forest(path: str) -> Forest:
    return forest_from_dict(_load(path))


def is_forest_document(doc) -> bool:
    return isinstance(doc, dict) and "trees" in doc and "class_count" in doc


def save_tree(tree: LinearDecisionTree, path: str) -> str:
    with open(path, "w") as f:
        f.write(jsonify(tree_to_dict(tree)))
    return path


def save_forest(forest: Forest, path: str) -> str:
    with open(path, "w") as f:
        f.write(jsonify(forest_to_dict(forest)))
    return path

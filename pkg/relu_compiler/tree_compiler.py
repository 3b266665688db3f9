"""Compile oblique decision trees and one-vs-rest forests into ReLU networks.

Hidden layer d holds one block of units per tree node at depth d: a node
reached through an internal parent owns an n-unit companion bundle of the
parent's split (sign-flipped for the zero child), and every leaf above depth d
carries a single pass-through unit. Children of a non-root node are gated by
weight -M from every other unit of the parent's layer, so a branch the point
did not take stays exactly zero all the way down.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import (
    BundleFailure,
    CalibrationOnSplit,
    DimensionMismatch,
    InconsistentDims,
    InvariantViolation,
    LabelMismatch,
    OnHyperplane,
)
from .geometry import AffineMap, Hyperplane, LabeledPoints, companion_bundle, map_hyperplane
from .network import Activation, Layer, Network, forward_batch, stack_parallel
from .settings import compiler_config
from .trees import Forest, Internal, LinearDecisionTree, NodeId

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 1.0
GATING_MARGIN_FRACTION = 0.25


@dataclass(frozen=True)
class Block:
    """Contiguous units of one hidden layer owned by a tree node."""

    owner: NodeId
    kind: str  # "bundle", "pass" or "const"
    start: int
    stop: int
    parent: Optional[NodeId] = None
    sign: int = 0

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass
class TreeAssembly:
    network: Network
    tree: LinearDecisionTree
    node_maps: Dict[NodeId, AffineMap]
    node_hyperplanes: Dict[NodeId, Tuple[Hyperplane, ...]]
    layout: List[List[Block]]
    gamma: float
    gating: Dict[NodeId, float] = field(default_factory=dict)
    calibration_counts: Dict[NodeId, int] = field(default_factory=dict)

    @property
    def unit_index(self) -> List[Dict[NodeId, Tuple[int, int]]]:
        return [{b.owner: (b.start, b.stop) for b in blocks} for blocks in self.layout]

    def block(self, layer: int, owner: NodeId) -> Block:
        """Block of ``owner`` in hidden layer ``layer`` (1-based)."""
        for b in self.layout[layer - 1]:
            if b.owner == owner:
                return b
        raise KeyError(f"node {owner!r} has no units in layer {layer}")


@dataclass
class ForestAssembly:
    network: Network
    forest: Forest
    trees: List[TreeAssembly]

    @property
    def gamma(self) -> float:
        return min(t.gamma for t in self.trees)

    def unit_offsets(self, layer: int) -> List[int]:
        """Column offset of each tree's block in hidden layer ``layer``."""
        offsets, start = [], 0
        for t in self.trees:
            offsets.append(start)
            start += t.network.widths[layer - 1]
        return offsets


def _as_points(calibration, n: int) -> LabeledPoints:
    if not isinstance(calibration, LabeledPoints):
        points, labels = calibration
        calibration = LabeledPoints(points, labels)
    if len(calibration) == 0:
        return LabeledPoints(np.zeros((0, n)), np.zeros(0, dtype=int))
    if calibration.points.shape[1] != n:
        raise DimensionMismatch(
            f"calibration points have width {calibration.points.shape[1]}, tree expects {n}")
    return calibration


def _route_calibration(tree: LinearDecisionTree, data: LabeledPoints, tol) -> Dict[NodeId, List[int]]:
    reached = {node_id: [] for node_id in tree.nodes}
    for i, (x, label) in enumerate(zip(data.points, data.labels)):
        try:
            steps = tree.path(x, tol)
        except OnHyperplane as e:
            raise CalibrationOnSplit(f"calibration point {i} {x.tolist()}: {e}")
        for node_id, _ in steps:
            reached[node_id].append(i)
        leaf = tree.route(x, tol) if steps else tree.root
        reached[leaf].append(i)
        if tree.nodes[leaf].label != label:
            raise LabelMismatch(
                f"calibration point {i} {x.tolist()} has label {label}, tree says {tree.nodes[leaf].label}")
    return reached


def _layout(tree: LinearDecisionTree, depth: int, n: int) -> List[List[Block]]:
    layout = []
    frontier = [tree.root]
    for d in range(1, depth + 1):
        blocks, start = [], 0
        for owner in frontier:
            node = tree.nodes[owner]
            if isinstance(node, Internal):
                for child, sign in ((node.pos, 1), (node.zero, -1)):
                    blocks.append(Block(child, "bundle", start, start + n, owner, sign))
                    start += n
            else:
                kind = "const" if d == 1 and owner == tree.root else "pass"
                blocks.append(Block(owner, kind, start, start + 1))
                start += 1
        layout.append(blocks)
        frontier = [b.owner for b in blocks]
    return layout


def _activation_floor(block: Block, maps: Dict[NodeId, AffineMap], margin: float) -> float:
    """Smallest unit sum of ``block`` when active on a point with the given margin."""
    if block.kind == "const":
        return 1.0
    rows = maps[block.owner].matrix
    return margin * float(np.sum(np.linalg.norm(rows, axis=1)))


def assemble_tree(tree: LinearDecisionTree, calibration, depth: Optional[int] = None,
                  tol: Optional[float] = None) -> TreeAssembly:
    n = tree.input_dim
    data = _as_points(calibration, n).check_binary()
    target = tree.depth if depth is None else int(depth)
    if target < tree.depth:
        raise ValueError(f"cannot pad a depth-{tree.depth} tree to depth {target}")

    reached = _route_calibration(tree, data, tol)
    counts = {node_id: len(idx) for node_id, idx in reached.items()}

    # bundles are calibrated in input space and pulled back into the
    # coordinates of the parent's units
    maps = {tree.root: AffineMap.identity(n)}
    bundles = {}
    node_hyperplanes = {}
    for node_id in tree.internal_nodes():
        node = tree.nodes[node_id]
        frame = maps[node_id]
        bundle = companion_bundle(node.split, data.points[reached[node_id]], tol=tol,
                                  default_gamma=DEFAULT_GAMMA)
        local = [map_hyperplane(h, frame) for h in bundle]
        bundles[node_id] = (np.vstack([h.normal for h in local]), np.array([h.offset for h in local]))
        normals = np.vstack([h.normal for h in bundle])
        offsets = np.array([h.offset for h in bundle])
        maps[node.pos] = AffineMap(normals, offsets)
        maps[node.zero] = AffineMap(-normals, -offsets)
        node_hyperplanes[node_id] = bundle

    gamma = _calibration_margin(tree, data, reached, node_hyperplanes)
    layout = _layout(tree, target, n)
    floor_margin = GATING_MARGIN_FRACTION * gamma

    gating = {}
    for blocks in layout[:-1] if layout else []:
        for b in blocks:
            if isinstance(tree.nodes[b.owner], Internal):
                others = [_activation_floor(o, maps, floor_margin) for o in blocks if o.owner != b.owner]
                largest_bias = float(np.max(np.abs(bundles[b.owner][1])))
                gating[b.owner] = largest_bias / min(others) if others else 0.0
                logger.debug("gating node %r: M=%.6g", b.owner, gating[b.owner])

    layers = []
    prev_blocks = None
    for blocks in layout:
        cols = n if prev_blocks is None else prev_blocks[-1].stop
        weights = np.zeros((blocks[-1].stop, cols))
        biases = np.zeros(blocks[-1].stop)
        for b in blocks:
            rows = slice(b.start, b.stop)
            if b.kind == "const":
                biases[rows] = 1.0
            elif b.kind == "pass":
                src = next(p for p in prev_blocks if p.owner == b.owner)
                weights[rows, src.start:src.stop] = 1.0
            else:
                w, c = bundles[b.parent]
                if prev_blocks is None:
                    weights[rows, :] = b.sign * w
                else:
                    gain = gating.get(b.parent, 0.0)
                    for p in prev_blocks:
                        if p.owner == b.parent:
                            weights[rows, p.start:p.stop] = b.sign * w
                        elif gain:
                            weights[rows, p.start:p.stop] = -gain
                biases[rows] = b.sign * c
        layers.append(Layer(weights, biases, Activation.relu()))
        prev_blocks = blocks

    if prev_blocks is None:
        # a single leaf: constant output
        out = Layer(np.zeros((1, n)), [float(tree.nodes[tree.root].label)], Activation.relu())
    else:
        row = np.zeros((1, prev_blocks[-1].stop))
        for b in prev_blocks:
            row[0, b.start:b.stop] = 1.0 if tree.nodes[b.owner].label == 1 else -1.0
        out = Layer(row, [0.0], Activation.relu())
    layers.append(out)

    net = Network(n, tuple(layers), f"tree depth={target} input_dim={n} leaves={len(tree.leaves())}")
    assembly = TreeAssembly(net, tree, maps, node_hyperplanes, layout, gamma, gating, counts)
    _check_calibration(assembly, data)
    logger.info("compiled tree: depth %d, widths %s, gamma %.3g", target, net.widths, gamma)
    return assembly


def _calibration_margin(tree, data, reached, node_hyperplanes) -> float:
    """Smallest distance from a calibration point to a construction hyperplane on its path."""
    gamma = np.inf
    for node_id, hyperplanes in node_hyperplanes.items():
        idx = reached[node_id]
        if not idx:
            continue
        points = data.points[idx]
        for h in hyperplanes:
            gamma = min(gamma, float(np.min(h.distance(points))))
    return DEFAULT_GAMMA if not np.isfinite(gamma) else gamma


def _check_calibration(assembly: TreeAssembly, data: LabeledPoints):
    if len(data) == 0:
        return
    out = forward_batch(assembly.network, data.points)[:, 0]
    wrong = np.flatnonzero((out > 0).astype(int) != data.labels)
    if wrong.size:
        raise BundleFailure(f"compiled network disagrees with the tree on {wrong.size} calibration points")


def compile_tree(tree: LinearDecisionTree, calibration, tol: Optional[float] = None) -> Network:
    return assemble_tree(tree, calibration, tol=tol).network


def assemble_forest(forest: Forest, calibration, tol: Optional[float] = None,
                    workers: Optional[int] = None) -> ForestAssembly:
    if isinstance(calibration, LabeledPoints):
        points, labels = calibration.points, calibration.labels
    else:
        points, labels = calibration
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if points.size and (points.ndim != 2 or points.shape[1] != forest.input_dim):
        raise InconsistentDims(f"calibration points of shape {points.shape} for a {forest.input_dim}-D forest")
    if np.any((labels < 0) | (labels >= forest.class_count)):
        raise InvariantViolation(f"class labels must lie in 0..{forest.class_count - 1}")
    depth = forest.depth
    workers = compiler_config.workers if workers is None else workers

    def build(item):
        class_id, tree = item
        one_vs_rest = LabeledPoints(points.reshape(-1, forest.input_dim), (labels == class_id).astype(int))
        return assemble_tree(tree, one_vs_rest, depth=depth, tol=tol)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        assemblies = list(pool.map(build, forest.trees))

    layers = []
    for k in range(depth + 1):
        blocks = [a.network.layers[k] for a in assemblies]
        layers.append(stack_parallel(blocks, shared_input=(k == 0)))
    net = Network(forest.input_dim, tuple(layers),
                  f"forest classes={forest.class_count} depth={depth} input_dim={forest.input_dim}")
    logger.info("compiled forest: %d classes, widths %s", forest.class_count, net.widths)
    return ForestAssembly(net, forest, assemblies)


def compile_forest(forest: Forest, calibration, tol: Optional[float] = None,
                   workers: Optional[int] = None) -> Network:
    return assemble_forest(forest, calibration, tol=tol, workers=workers).network


def path_hyperplanes(assembly: TreeAssembly, x, tol: Optional[float] = None) -> List[Hyperplane]:
    """Input-space splits and companions met by ``x`` on its way to a leaf."""
    out = []
    for node_id, _ in assembly.tree.path(x, tol):
        out.extend(assembly.node_hyperplanes[node_id])
    return out


def margin_ok(assembly, X, delta: Optional[float] = None, tol: Optional[float] = None) -> np.ndarray:
    """True for points at distance >= delta from every construction hyperplane on
    their path and on the same side of each split as all its companions."""
    if isinstance(assembly, ForestAssembly):
        delta = assembly.gamma / 2.0 if delta is None else delta
        masks = [margin_ok(t, X, delta, tol) for t in assembly.trees]
        return np.logical_and.reduce(masks)
    delta = assembly.gamma / 2.0 if delta is None else delta
    X = np.atleast_2d(np.asarray(X, dtype=float))
    visits, leaves = assembly.tree.route_batch(X, tol)
    ok = np.array([leaf is not None for leaf in leaves], dtype=bool)
    for node_id, (rows, positive, stuck) in visits.items():
        sign = np.where(positive, 1.0, -1.0)
        good = ~stuck
        for h in assembly.node_hyperplanes[node_id]:
            values = h.value(X[rows])
            good &= (sign * values > 0) & (np.abs(values) / np.linalg.norm(h.normal) >= delta)
        ok[rows[~good]] = False
    return ok

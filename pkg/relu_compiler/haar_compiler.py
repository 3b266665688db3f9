"""Compile piecewise-constant (Haar) functions into ReLU networks.

A cell module walks the 2n faces of its box, one hidden layer per face:
lower faces in coordinate order, then upper faces. Each layer is a bundle of
n units whose first hyperplane sits ``outer_offset`` outside the face (positive
toward the cell) and whose companions are tilted by at most
``wedge_scale * outer_offset`` over the compile domain. A point rejected at
some face zeroes that layer, and every later layer keeps it at zero because
its biases are non-positive. A two-unit plateau layer then clamps the
aggregated activation to the cell value, and a linear readout sums modules.
One-dimensional cells use a two-unit ramp layer and a one-unit cutoff layer.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import BundleFailure, DomainMismatch, EmptyDomain, PlateauGainFailure
from .geometry import AffineMap, Hyperplane, Hyperrectangle, map_hyperplane, perturbed_bundle
from .haar import (
    ErrorReport,
    HaarFunction,
    TightenParams,
    band_area_bound,
    check_params,
    compile_domain,
    omega,
)
from .network import Activation, Layer, Network, forward_batch, stack_parallel
from .samplers import GridSampler, MonteCarloSampler
from .settings import compiler_config

logger = logging.getLogger(__name__)

MAX_WEDGE_RETRIES = 20
MAX_VERTEX_DIM = 20
DEFAULT_GRID_RESOLUTION = 512
DEFAULT_MONTE_CARLO_COUNT = 200_000

# region codes: all bundles positive, cleanly rejected at a face, inside a companion wedge
INSIDE, REJECTED, WEDGE = 0, 1, 2
REGION_NAMES = {INSIDE: "inside", REJECTED: "rejected", WEDGE: "wedge"}


def face_planes(cell: Hyperrectangle, eps: float) -> List[Hyperplane]:
    """Hyperplane 1 of every face, ``eps`` outside it, lower faces first."""
    n = cell.dim
    faces = []
    for i in range(n):
        faces.append(Hyperplane(np.eye(n)[i], -(cell.lower[i] - eps)))
    for i in range(n):
        faces.append(Hyperplane(-np.eye(n)[i], cell.upper[i] + eps))
    return faces


def _face_axis(k: int, n: int) -> Tuple[int, float]:
    """Axis and orientation (+1 lower, -1 upper) of face ``k``."""
    return (k, 1.0) if k < n else (k - n, -1.0)


def _pivot(k: int, faces: List[Hyperplane], domain: Hyperrectangle) -> np.ndarray:
    """Pivot for face ``k``: the bundle's corner lands on the zero side of face k+1."""
    n = domain.dim
    pivot = domain.center.copy()
    if k + 1 < len(faces):
        axis, orient = _face_axis(k + 1, n)
        plane = -faces[k + 1].offset * orient
        pivot[axis] = plane - orient * domain.sides[axis]
    return pivot


def _tilt(pivot: np.ndarray, skip: int, domain: Hyperrectangle, budget: float) -> float:
    reach = np.maximum(np.abs(domain.lower - pivot), np.abs(domain.upper - pivot))
    reach = np.delete(reach, skip)
    return budget / float(np.max(reach)) if reach.size and np.max(reach) > 0 else budget


@dataclass
class CellModule:
    cell: Hyperrectangle
    value: float
    params: TightenParams
    domain: Hyperrectangle
    layers: Tuple[Layer, ...]
    bundles: Tuple[Tuple[Hyperplane, ...], ...]
    gain: float
    retries: int = 0

    @property
    def dim(self) -> int:
        return self.cell.dim

    @property
    def separation_layers(self) -> Tuple[Layer, ...]:
        return self.layers[:2 * self.dim]

    def network(self) -> Network:
        return Network(self.dim, self.layers, f"haar cell {self.cell.to_dict()} value={self.value!r}")

    def aggregate(self, X) -> np.ndarray:
        """Aggregated activation ``a`` feeding the plateau layer."""
        sep = Network(self.dim, self.separation_layers)
        return forward_batch(sep, np.atleast_2d(X)).sum(axis=1)

    def aggregate_gradient(self, X) -> np.ndarray:
        """Exact gradient of ``a`` at each point, from its ReLU activation pattern."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        jac = np.broadcast_to(np.eye(self.dim), (X.shape[0], self.dim, self.dim))
        out = X
        for layer in self.separation_layers:
            pre = layer.pre_activation(out)
            jac = (pre > 0)[:, :, None] * np.einsum("ij,pjk->pik", layer.weights, jac)
            out = layer.activation.apply(pre)
        return jac.sum(axis=1)

    def regions(self, X) -> np.ndarray:
        """INSIDE, REJECTED or WEDGE code for each point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        labels = np.full(X.shape[0], INSIDE, dtype=np.int8)
        open_ = np.ones(X.shape[0], dtype=bool)
        for bundle in self.bundles:
            values = np.stack([h.value(X) for h in bundle], axis=1)
            positive = np.all(values > 0, axis=1)
            negative = np.all(values < 0, axis=1)
            labels[open_ & negative] = REJECTED
            labels[open_ & ~positive & ~negative] = WEDGE
            open_ &= positive
        return labels


def _interval_layers(cell: Hyperrectangle, eps: float) -> Tuple[List[Layer], Tuple[Tuple[Hyperplane, ...], ...]]:
    """Two layers for an interval: a ramp from ``lo - eps`` cut off exactly at ``up + eps``."""
    lo, up = float(cell.lower[0]), float(cell.upper[0])
    cutoff = (up - lo + 2 * eps) / eps
    first = Layer([[1.0], [1.0]], [eps - lo, -up], Activation.relu())
    second = Layer([[1.0, -cutoff]], [0.0], Activation.relu())
    bundles = ((Hyperplane([1.0], eps - lo),), (Hyperplane([-1.0], up + eps),))
    return [first, second], bundles


def _separation_layers(cell: Hyperrectangle, params: TightenParams, domain: Hyperrectangle):
    n = cell.dim
    eps = params.outer_offset
    faces = face_planes(cell, eps)
    frame = AffineMap.identity(n)
    layers, bundles = [], []
    for k, face in enumerate(faces):
        pivot = _pivot(k, faces, domain)
        skip = _face_axis(k, n)[0]
        bundle = perturbed_bundle(face, _tilt(pivot, skip, domain, params.wedge_scale * eps), pivot)
        local = [map_hyperplane(h, frame, tol=0.0) for h in bundle]
        weights = np.vstack([h.normal for h in local])
        biases = np.array([h.offset for h in local])
        if k > 0 and np.any(biases > 0):
            return None
        layers.append(Layer(weights, biases, Activation.relu()))
        bundles.append(bundle)
        frame = AffineMap(np.vstack([h.normal for h in bundle]), np.array([h.offset for h in bundle]))
    return layers, tuple(bundles)


def _plateau_gain(cell: Hyperrectangle, value: float, aggregate, gain: Optional[float]) -> float:
    if value == 0:
        return 0.0
    if cell.dim > MAX_VERTEX_DIM:
        raise PlateauGainFailure(f"cannot certify a plateau over 2**{cell.dim} vertices")
    a_min = float(np.min(aggregate(cell.vertices())))
    if a_min <= 0:
        raise PlateauGainFailure(f"aggregate activation {a_min:.3g} at a cell vertex is not positive")
    if gain is None:
        return abs(value) / (0.5 * a_min)
    if gain * a_min < abs(value):
        raise PlateauGainFailure(f"plateau gain {gain} reaches only {gain * a_min:.6g} < |value| {abs(value)}")
    return float(gain)


def compile_cell(cell: Hyperrectangle, value: float, params: TightenParams,
                 domain: Optional[Hyperrectangle] = None) -> CellModule:
    check_params(HaarFunction([(cell, value)]), params)
    eps = params.outer_offset
    domain = cell.inflate(eps) if domain is None else domain
    if domain.dim != cell.dim or not np.all(domain.contains([cell.lower, cell.upper])):
        raise DomainMismatch("compile domain must contain the cell")
    n = cell.dim

    effective, retries = params, 0
    if n == 1:
        layers, bundles = _interval_layers(cell, eps)
    else:
        built = _separation_layers(cell, effective, domain)
        while built is None:
            retries += 1
            if retries > MAX_WEDGE_RETRIES:
                raise BundleFailure(f"separation biases stayed positive after {MAX_WEDGE_RETRIES} retries")
            effective = effective.with_wedge_scale(effective.wedge_scale / 2)
            logger.debug("positive separation bias; wedge scale -> %.3g", effective.wedge_scale)
            built = _separation_layers(cell, effective, domain)
        layers, bundles = built

    draft = CellModule(cell, value, effective, domain, tuple(layers), bundles, 0.0, retries)
    gain = _plateau_gain(cell, value, draft.aggregate, params.plateau_gain)
    collect = np.ones(layers[-1].out_dim)
    plateau = Layer(np.vstack([gain * collect, gain * collect]), [0.0, -abs(value)], Activation.relu())
    sign = 1.0 if value >= 0 else -1.0
    readout = Layer([[sign, -sign]] if value != 0 else [[0.0, 0.0]], [0.0], Activation.linear())
    layers = tuple(layers) + (plateau, readout)
    logger.debug("cell module: value=%.6g gain=%.6g wedge_scale=%.3g", value, gain, effective.wedge_scale)
    return CellModule(cell, value, effective, domain, layers, bundles, gain, retries)


@dataclass
class HaarAssembly:
    network: Network
    function: HaarFunction
    modules: List[CellModule]
    params: TightenParams
    domain: Hyperrectangle
    baseline: float

    def regions(self, X) -> np.ndarray:
        """Per-module region labels, shape (points, cells)."""
        return np.stack([m.regions(X) for m in self.modules], axis=1)

    def clean_outside(self, X) -> np.ndarray:
        """Points every module rejects outright."""
        return np.all(self.regions(X) == REJECTED, axis=1)


def assemble_haar(f: HaarFunction, params: TightenParams, baseline: bool = False,
                  workers: Optional[int] = None) -> HaarAssembly:
    check_params(f, params)
    domain = compile_domain(f, params)
    values = f.values
    shift = float((values.max() + values.min()) / 2.0) if baseline else 0.0
    workers = compiler_config.workers if workers is None else workers

    def build(item):
        box, value = item
        return compile_cell(box, value - shift, params, domain)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        modules = list(pool.map(build, f.cells))

    depth = len(modules[0].layers)
    layers = []
    for k in range(depth - 1):
        layers.append(stack_parallel([m.layers[k] for m in modules], shared_input=(k == 0)))
    readout = np.hstack([m.layers[-1].weights for m in modules])
    layers.append(Layer(readout, [shift], Activation.linear()))
    net = Network(f.dim, tuple(layers), f"haar cells={len(f)} dim={f.dim} baseline={shift!r}")
    logger.info("compiled Haar function: %d cells, widths %s", len(f), net.widths)
    return HaarAssembly(net, f, modules, params, domain, shift)


def compile_haar(f: HaarFunction, params: TightenParams, baseline: bool = False,
                 workers: Optional[int] = None) -> Network:
    return assemble_haar(f, params, baseline, workers).network


def default_sampler(f: HaarFunction, seed: Optional[int] = None):
    box = f.bounding_box()
    if f.dim <= 2:
        return GridSampler(box, DEFAULT_GRID_RESOLUTION if f.dim == 2 else DEFAULT_GRID_RESOLUTION * 64)
    seed = compiler_config.seed if seed is None else seed
    return MonteCarloSampler(box, DEFAULT_MONTE_CARLO_COUNT, seed)


def measure_error(net: Network, f: HaarFunction, sampler=None, params: Optional[TightenParams] = None,
                  chunk: int = 65536) -> ErrorReport:
    """Quadrature estimate of the integral of |f_hat - f| over the domain of f."""
    if net.input_dim != f.dim:
        raise DomainMismatch(f"network takes {net.input_dim} inputs, function is {f.dim}-D")
    sampler = default_sampler(f) if sampler is None else sampler
    points = sampler.points()
    abs_sum, sq_sum, used = 0.0, 0.0, 0
    for start in range(0, points.shape[0], chunk):
        batch = points[start:start + chunk]
        target = f.evaluate(batch)
        inside = ~np.isnan(target)
        if not np.any(inside):
            continue
        diff = forward_batch(net, batch[inside])[:, 0] - target[inside]
        abs_sum += float(np.sum(np.abs(diff)))
        sq_sum += float(np.sum(diff ** 2))
        used += int(inside.sum())
    if used == 0:
        raise EmptyDomain("no sample fell inside the function's domain")
    w = omega(f)
    s_b = band_area_bound(f, params) if params is not None else float("nan")
    return ErrorReport(
        omega=w,
        band_area_bound=s_b,
        bound=w * s_b,
        l1_error=abs_sum * sampler.weight,
        l2_error=float(np.sqrt(sq_sum * sampler.weight)),
        samples=used,
        seed=sampler.seed,
        sampler=sampler.to_dict(),
    )


def plateau_inset(cell: Hyperrectangle, eps: float) -> Optional[Hyperrectangle]:
    """Cell shrunk by 2*eps, or None when nothing is left."""
    if np.any(cell.sides <= 4 * eps):
        return None
    return cell.inset(2 * eps)

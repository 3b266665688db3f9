"""Hyperplanes, boxes, affine maps and the companion-bundle construction.

Everything here is an immutable value; arrays are copied on construction and
marked read-only so they can be shared between worker threads.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DegenerateData,
    DimensionMismatch,
    InvariantViolation,
    OnHyperplane,
    SingularBundle,
    ZeroNormal,
    BundleFailure,
)
from .settings import compiler_config

logger = logging.getLogger(__name__)

NORMAL_EPS = 1e-12


def _frozen(values, ndim=1) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


class Side(Enum):
    POSITIVE = "positive"
    ZERO_SIDE = "zero_side"


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Oriented hyperplane ``normal . x + offset = 0``; values above zero are the positive side."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = _frozen(self.normal)
        if normal.ndim != 1 or not np.any(np.abs(normal) > NORMAL_EPS):
            raise ZeroNormal(f"hyperplane normal {normal.tolist()} has no usable component")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def value(self, x) -> Union[float, np.ndarray]:
        """Signed evaluation; accepts one point or an (N, n) array."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"point of width {x.shape[-1]} for a {self.dim}-D hyperplane")
        out = x @ self.normal + self.offset
        return float(out) if np.ndim(out) == 0 else out

    def distance(self, x):
        return np.abs(self.value(x)) / np.linalg.norm(self.normal)

    def negated(self) -> "Hyperplane":
        return Hyperplane(-self.normal, -self.offset)

    def unit(self) -> "Hyperplane":
        scale = np.linalg.norm(self.normal)
        return Hyperplane(self.normal / scale, self.offset / scale)

    def __eq__(self, other):
        if not isinstance(other, Hyperplane):
            return NotImplemented
        return np.array_equal(self.normal, other.normal) and self.offset == other.offset

    def __hash__(self):
        return hash((self.normal.tobytes(), self.offset))

    def to_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperplane":
        return cls(data["normal"], data["offset"])


@dataclass(frozen=True, eq=False)
class Hyperrectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, upper = _frozen(self.lower), _frozen(self.upper)
        if lower.shape != upper.shape:
            raise DimensionMismatch("hyperrectangle corners differ in dimension")
        if not np.all(lower < upper):
            raise InvariantViolation(f"hyperrectangle needs lower < upper, got {lower.tolist()} / {upper.tolist()}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, x, closed=True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if closed:
            inside = (x >= self.lower) & (x <= self.upper)
        else:
            inside = (x > self.lower) & (x < self.upper)
        return np.all(inside, axis=1)

    def inset(self, d: float) -> "Hyperrectangle":
        return Hyperrectangle(self.lower + d, self.upper - d)

    def inflate(self, d) -> "Hyperrectangle":
        return Hyperrectangle(self.lower - d, self.upper + d)

    def vertices(self) -> np.ndarray:
        corners = itertools.product(*zip(self.lower, self.upper))
        return np.array(list(corners), dtype=float)

    def overlaps(self, other: "Hyperrectangle") -> bool:
        """True when the interiors intersect."""
        return bool(np.all(self.lower < other.upper) and np.all(other.lower < self.upper))

    def gap_to(self, other: "Hyperrectangle") -> float:
        """L-infinity gap between the closed boxes (0 when they touch)."""
        gaps = np.maximum(0.0, np.maximum(other.lower - self.upper, self.lower - other.upper))
        return float(np.max(gaps))

    def linf_outside(self, x) -> np.ndarray:
        """Per-point L-infinity distance from the box (0 inside)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        excess = np.maximum(self.lower - x, x - self.upper)
        return np.max(np.maximum(excess, 0.0), axis=1)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``y = matrix @ x + shift``."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix, ndim=2)
        shift = _frozen(self.shift)
        if matrix.shape[0] != shift.shape[0]:
            raise DimensionMismatch("affine map shift does not match matrix rows")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "shift", shift)

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(n), np.zeros(n))

    @classmethod
    def from_layer(cls, layer) -> "AffineMap":
        return cls(layer.weights, layer.biases)

    def rows(self) -> Tuple[Hyperplane, ...]:
        """Each output coordinate as an input-space hyperplane."""
        return tuple(Hyperplane(w, s) for w, s in zip(self.matrix, self.shift))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.shift

    def then(self, matrix, shift) -> "AffineMap":
        """Compose with a following affine step ``z -> matrix @ z + shift``."""
        matrix = np.asarray(matrix, dtype=float)
        return AffineMap(matrix @ self.matrix, matrix @ self.shift + np.asarray(shift, dtype=float))

    def is_nonsingular(self, tol: Optional[float] = None) -> bool:
        return is_nonsingular(self.matrix, tol)


@dataclass(frozen=True, eq=False)
class LabeledPoints:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1) if points.size else points.reshape(0, 0)
        labels = np.array(self.labels, dtype=int).reshape(-1)
        if points.shape[0] != labels.shape[0]:
            raise InvariantViolation(f"{points.shape[0]} points but {labels.shape[0]} labels")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, mask) -> "LabeledPoints":
        return LabeledPoints(self.points[mask], self.labels[mask])

    def check_binary(self):
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise InvariantViolation("labels must be 0 or 1")
        return self


def bundle_matrix(bundle: Sequence[Hyperplane]) -> np.ndarray:
    return np.vstack([h.normal for h in bundle])


def bundle_offsets(bundle: Sequence[Hyperplane]) -> np.ndarray:
    return np.array([h.offset for h in bundle], dtype=float)


def is_nonsingular(matrix, tol: Optional[float] = None) -> bool:
    """|det| > tol * product of row norms (a scale-free conditioning test)."""
    tol = compiler_config.singular_tol if tol is None else tol
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    scale = float(np.prod(np.linalg.norm(matrix, axis=1)))
    return scale > 0 and abs(float(np.linalg.det(matrix))) > tol * scale


def side(h: Hyperplane, x, tol: Optional[float] = None) -> Side:
    tol = compiler_config.side_tol if tol is None else tol
    if tol <= 0:
        raise ValueError("side tolerance must be positive")
    v = h.value(np.asarray(x, dtype=float))
    if v > tol:
        return Side.POSITIVE
    if v < -tol:
        return Side.ZERO_SIDE
    raise OnHyperplane(f"point {np.asarray(x).tolist()} lies on the hyperplane (|value| = {abs(v):.3g})")


def perturbed_bundle(h: Hyperplane, eps: float, pivot=None) -> Tuple[Hyperplane, ...]:
    """``h`` plus n-1 companions ``normal + eps*e_j`` pivoting around ``pivot``.

    The coordinate of the largest normal component is skipped, which keeps
    the stacked normals nonsingular (determinant +-eps**(n-1) * normal[j*]).
    """
    n = h.dim
    pivot = np.zeros(n) if pivot is None else np.asarray(pivot, dtype=float)
    skip = int(np.argmax(np.abs(h.normal)))
    bundle = [h]
    for j in range(n):
        if j == skip:
            continue
        normal = h.normal.copy()
        normal[j] += eps
        bundle.append(Hyperplane(normal, h.offset - eps * pivot[j]))
    return tuple(bundle)


def companion_bundle(h: Hyperplane, data, n: Optional[int] = None, tol: Optional[float] = None,
                     default_gamma: float = 1.0) -> Tuple[Hyperplane, ...]:
    """n hyperplanes with the classification effect of ``h`` on ``data``.

    ``eps = gamma / (2 * r_max)`` where gamma is the smallest |h(x)| over the
    data and r_max the largest coordinate magnitude, so no companion moves any
    evaluation by more than gamma / 2.
    """
    tol = compiler_config.side_tol if tol is None else tol
    if n is not None and n != h.dim:
        raise DimensionMismatch(f"bundle of size {n} requested for a {h.dim}-D hyperplane")
    points = data.points if isinstance(data, LabeledPoints) else np.asarray(data, dtype=float)
    points = points.reshape(-1, h.dim) if points.size else np.zeros((0, h.dim))

    if points.shape[0] == 0:
        gamma, eps = default_gamma, default_gamma / 2.0
    else:
        values = h.value(points)
        if np.any(np.abs(values) <= tol):
            worst = int(np.argmin(np.abs(values)))
            raise DegenerateData(f"calibration point {points[worst].tolist()} lies on the split")
        gamma = float(np.min(np.abs(values)))
        r_max = float(np.max(np.abs(points)))
        eps = 1.0 if r_max == 0 else gamma / (2.0 * r_max)

    bundle = perturbed_bundle(h, eps)
    logger.debug("companion bundle: n=%d gamma=%.3g eps=%.3g", h.dim, gamma, eps)

    if points.shape[0]:
        reference = np.sign(h.value(points))
        for member in bundle[1:]:
            if not np.array_equal(np.sign(member.value(points)), reference):
                raise BundleFailure("companion changed the side of a calibration point")
    if not is_nonsingular(bundle_matrix(bundle)):
        raise BundleFailure("companion normals are numerically singular")
    return bundle


def transmit_layer(bundle: Sequence[Hyperplane], tol: Optional[float] = None):
    """ReLU layer whose units are the bundle hyperplanes."""
    from .network import Activation, Layer

    weights = bundle_matrix(bundle)
    if not is_nonsingular(weights, tol):
        raise SingularBundle("bundle normal matrix is singular")
    return Layer(weights, bundle_offsets(bundle), Activation.relu())


def map_hyperplane(h: Hyperplane, a: AffineMap, tol: Optional[float] = None) -> Hyperplane:
    """Pull ``h`` back through ``a``: result(a(x)) == h(x) for every x."""
    if not a.is_nonsingular(tol):
        raise SingularBundle("cannot pull a hyperplane through a singular map")
    normal = np.linalg.solve(a.matrix.T, h.normal)
    return Hyperplane(normal, h.offset - float(normal @ a.shift))

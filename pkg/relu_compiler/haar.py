"""Piecewise-constant functions on hyperrectangle cells and their error bounds."""
import json
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InconsistentDims, InvariantViolation, OverlappingCells, ParamsTooLoose, ParseError
from .geometry import Hyperrectangle
from .utils import jsonify, parse_json

logger = logging.getLogger(__name__)

DEFAULT_WEDGE_SCALE = 0.1


@dataclass(frozen=True)
class TightenParams:
    outer_offset: float
    wedge_scale: float = DEFAULT_WEDGE_SCALE
    plateau_gain: Optional[float] = None  # None means auto

    def __post_init__(self):
        if not self.outer_offset > 0:
            raise ValueError(f"outer offset must be positive, got {self.outer_offset}")
        if not 0 < self.wedge_scale <= 1:
            raise ValueError(f"wedge scale must lie in (0, 1], got {self.wedge_scale}")
        if self.plateau_gain is not None and not self.plateau_gain > 0:
            raise ValueError(f"plateau gain must be positive, got {self.plateau_gain}")

    def with_wedge_scale(self, wedge_scale: float) -> "TightenParams":
        return TightenParams(self.outer_offset, wedge_scale, self.plateau_gain)

    def to_dict(self) -> dict:
        return {
            "outer_offset": self.outer_offset,
            "wedge_scale": self.wedge_scale,
            "plateau_gain": "auto" if self.plateau_gain is None else self.plateau_gain,
        }


class HaarFunction:
    """Finite list of (cell, value) pairs with pairwise disjoint interiors."""

    def __init__(self, cells: Sequence[Tuple[Hyperrectangle, float]]):
        cells = [(box, float(value)) for box, value in cells]
        if not cells:
            raise InvariantViolation("a Haar function needs at least one cell")
        dims = {box.dim for box, _ in cells}
        if len(dims) > 1:
            raise InconsistentDims(f"cells disagree on dimension: {sorted(dims)}")
        if not all(np.isfinite(v) for _, v in cells):
            raise InvariantViolation("cell values must be finite")
        self.cells = cells
        self._check_disjoint()

    def _check_disjoint(self):
        lower = np.array([box.lower for box, _ in self.cells])
        upper = np.array([box.upper for box, _ in self.cells])
        for i in range(len(self.cells) - 1):
            hits = np.all((lower[i] < upper[i + 1:]) & (lower[i + 1:] < upper[i]), axis=1)
            if np.any(hits):
                j = i + 1 + int(np.argmax(hits))
                raise OverlappingCells(f"cells {i} and {j} overlap")

    @property
    def dim(self) -> int:
        return self.cells[0][0].dim

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.cells])

    @property
    def boxes(self) -> List[Hyperrectangle]:
        return [box for box, _ in self.cells]

    def __len__(self):
        return len(self.cells)

    def bounding_box(self) -> Hyperrectangle:
        lower = np.min([box.lower for box in self.boxes], axis=0)
        upper = np.max([box.upper for box in self.boxes], axis=0)
        return Hyperrectangle(lower, upper)

    def volume(self) -> float:
        return float(sum(box.volume for box in self.boxes))

    def min_side(self) -> float:
        return float(min(np.min(box.sides) for box in self.boxes))

    def cell_index(self, X) -> np.ndarray:
        """Index of the first (closed) cell containing each point, -1 outside S."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        index = np.full(X.shape[0], -1, dtype=int)
        for i, box in enumerate(self.boxes):
            hit = (index < 0) & box.contains(X)
            index[hit] = i
        return index

    def evaluate(self, X) -> np.ndarray:
        """f at each point; NaN outside the domain."""
        index = self.cell_index(X)
        out = np.full(index.shape[0], np.nan)
        inside = index >= 0
        out[inside] = self.values[index[inside]]
        return out

    def contains(self, X) -> np.ndarray:
        return self.cell_index(X) >= 0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "cells": [{"lower": box.lower.tolist(), "upper": box.upper.tolist(), "value": v}
                      for box, v in self.cells],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HaarFunction":
        if not isinstance(doc, dict) or not isinstance(doc.get("cells"), list):
            raise ParseError("Haar document needs a 'cells' list")
        cells = []
        for i, raw in enumerate(doc["cells"]):
            try:
                cells.append((Hyperrectangle(raw["lower"], raw["upper"]), float(raw["value"])))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"malformed cell ({e})", field=f"cells[{i}]")
        f = cls(cells)
        if "dim" in doc and doc["dim"] != f.dim:
            raise InconsistentDims(f"document says dim {doc['dim']} but cells are {f.dim}-D")
        return f


def load_haar(path: str) -> HaarFunction:
    with open(path, "rb") as f:
        try:
            doc = parse_json(f.read())
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON in {path}: {e.msg}", line=e.lineno)
    return HaarFunction.from_dict(doc)


def save_haar(f: HaarFunction, path: str, provenance: Optional[dict] = None) -> str:
    doc = f.to_dict()
    if provenance is not None:
        doc["provenance"] = provenance
    with open(path, "w") as out:
        out.write(jsonify(doc))
    return path


def check_params(f: HaarFunction, params: TightenParams):
    """Raise ParamsTooLoose unless the outer shells stay clear of each other."""
    eps = params.outer_offset
    if eps >= f.min_side() / 2:
        raise ParamsTooLoose(f"outer offset {eps} is not below half the smallest side {f.min_side()}")
    boxes = f.boxes
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            gap = boxes[i].gap_to(boxes[j])
            if gap > 0 and eps >= gap:
                raise ParamsTooLoose(f"outer offset {eps} reaches across the gap {gap:.6g} between cells {i} and {j}")


def compile_domain(f: HaarFunction, params: TightenParams) -> Hyperrectangle:
    """Box over which companion deviations are controlled."""
    return f.bounding_box().inflate(params.outer_offset)


def omega(f: HaarFunction) -> float:
    values = f.values
    return float(values.max() - values.min())


def band_area_bound(f: HaarFunction, params: TightenParams, domain: Optional[Hyperrectangle] = None) -> float:
    """Upper bound on the total measure where cell modules can be inexact."""
    eps = params.outer_offset
    domain = compile_domain(f, params) if domain is None else domain
    total = 0.0
    for box in f.boxes:
        total += float(np.prod(box.sides + 2 * eps) - np.prod(box.sides))
    if f.dim > 1:
        widths = domain.sides
        cross = [float(np.prod(np.delete(widths, i))) for i in range(f.dim)]
        per_cell = 2.0 * params.wedge_scale * eps * 2.0 * sum(cross)
        total += len(f) * per_cell
    return total


@dataclass
class ErrorReport:
    omega: float
    band_area_bound: float
    bound: float
    l1_error: Optional[float] = None
    l2_error: Optional[float] = None
    samples: int = 0
    seed: Optional[int] = None
    sampler: Optional[dict] = None

    @property
    def within_bound(self) -> Optional[bool]:
        return None if self.l1_error is None else self.l1_error <= self.bound

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "band_area_bound": self.band_area_bound,
            "bound": self.bound,
            "l1_error": self.l1_error,
            "l2_error": self.l2_error,
            "samples": self.samples,
            "seed": self.seed,
            "sampler": self.sampler,
        }


def error_bound(f: HaarFunction, params: TightenParams, domain: Optional[Hyperrectangle] = None) -> ErrorReport:
    w = omega(f)
    s_b = band_area_bound(f, params, domain)
    return ErrorReport(omega=w, band_area_bound=s_b, bound=w * s_b)


def haar_project(g: Callable[[np.ndarray], np.ndarray], domain: Hyperrectangle, resolution: int) -> HaarFunction:
    """Uniform grid of ``resolution**n`` cells valued by ``g`` at the cell centres."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    edges = [np.linspace(lo, up, resolution + 1) for lo, up in zip(domain.lower, domain.upper)]
    index = np.stack(np.meshgrid(*[np.arange(resolution)] * domain.dim, indexing="ij"), axis=-1)
    index = index.reshape(-1, domain.dim)
    cells = []
    lowers = np.array([[edges[a][k] for a, k in enumerate(row)] for row in index])
    uppers = np.array([[edges[a][k + 1] for a, k in enumerate(row)] for row in index])
    values = np.asarray(g((lowers + uppers) / 2.0), dtype=float).reshape(-1)
    for lo, up, v in zip(lowers, uppers, values):
        cells.append((Hyperrectangle(lo, up), v))
    logger.debug("projected onto %d cells", len(cells))
    return HaarFunction(cells)


def product_sine(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.prod(np.sin(np.pi * X), axis=1)


def linear_ramp(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X.mean(axis=1)


def checkerboard(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (np.floor(4 * X).astype(int).sum(axis=1) % 2).astype(float)


BUILTIN_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "product_sine": product_sine,
    "linear_ramp": linear_ramp,
    "checkerboard": checkerboard,
}

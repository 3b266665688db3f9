"""Seeded point samplers used by the verifiers and the Haar error estimate.

Every sampler is reproducible from (seed, workers): the work is split with
``SeedSequence.spawn`` and the per-worker chunks are concatenated in worker
order, so thread scheduling never changes the result.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from .geometry import Hyperrectangle
from .settings import compiler_config

logger = logging.getLogger(__name__)


def draw_parallel(sampler_fn: Callable[[np.random.Generator, int], np.ndarray], count: int,
                  seed: int, workers: Optional[int] = None) -> np.ndarray:
    """Call ``sampler_fn(rng, k)`` on each worker's share of ``count``."""
    if count < 0:
        raise ValueError("sample count must be non-negative")
    workers = max(1, compiler_config.workers if workers is None else int(workers))
    streams = np.random.SeedSequence(seed).spawn(workers)
    shares = [count // workers + (1 if i < count % workers else 0) for i in range(workers)]

    def draw(i):
        return sampler_fn(np.random.default_rng(streams[i]), shares[i])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(draw, range(workers)))
    return np.concatenate(chunks, axis=0)


class UniformBox:
    def __init__(self, lower, upper):
        self.box = Hyperrectangle(lower, upper)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.box.lower, self.box.upper, size=(count, self.box.dim))

    def draw(self, count: int, seed: int, workers: Optional[int] = None) -> np.ndarray:
        return draw_parallel(self.sample, count, seed, workers)

    def to_dict(self) -> dict:
        return {"kind": "uniform", **self.box.to_dict()}


class GridSampler:
    """Cell midpoints of a regular ``resolution``-per-axis grid over ``box``."""

    def __init__(self, box: Hyperrectangle, resolution: int):
        if resolution < 1:
            raise ValueError("grid resolution must be at least 1")
        self.box = box
        self.resolution = int(resolution)
        self.seed = None

    @property
    def count(self) -> int:
        return self.resolution ** self.box.dim

    @property
    def weight(self) -> float:
        """Volume represented by each sample."""
        return self.box.volume / self.count

    def points(self) -> np.ndarray:
        axes = [lo + (np.arange(self.resolution) + 0.5) * (up - lo) / self.resolution
                for lo, up in zip(self.box.lower, self.box.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"kind": "grid", "resolution": self.resolution, **self.box.to_dict()}


class MonteCarloSampler:
    def __init__(self, box: Hyperrectangle, count: int, seed: int, workers: Optional[int] = None):
        if count < 1:
            raise ValueError("Monte Carlo sample count must be at least 1")
        self.box = box
        self.count = int(count)
        self.seed = int(seed)
        self.workers = workers

    @property
    def weight(self) -> float:
        return self.box.volume / self.count

    def points(self) -> np.ndarray:
        uniform = UniformBox(self.box.lower, self.box.upper)
        return uniform.draw(self.count, self.seed, self.workers)

    def to_dict(self) -> dict:
        return {"kind": "monte_carlo", "count": self.count, "seed": self.seed, **self.box.to_dict()}


def inflated_bbox(points, fraction: float = 0.2) -> Hyperrectangle:
    """Bounding box of ``points`` grown by ``fraction`` of its extent on every side."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lower, upper = points.min(axis=0), points.max(axis=0)
    extent = np.where(upper > lower, upper - lower, 1.0)
    return Hyperrectangle(lower - fraction * extent, upper + fraction * extent)


def far_outside(box_list, margin: float, bounds: Hyperrectangle, count: int, seed: int,
                workers: Optional[int] = None, max_rounds: int = 50) -> np.ndarray:
    """Uniform points of ``bounds`` at L-infinity distance > margin from every box."""
    uniform = UniformBox(bounds.lower, bounds.upper)
    kept, drawn, rounds = [], 0, 0
    sub_seed = np.random.SeedSequence(seed)
    while drawn < count and rounds < max_rounds:
        round_seed = int(sub_seed.spawn(1)[0].generate_state(1)[0])
        batch = uniform.draw(max(count, 1000), round_seed, workers)
        mask = np.ones(batch.shape[0], dtype=bool)
        for box in box_list:
            mask &= box.linf_outside(batch) > margin
        kept.append(batch[mask])
        drawn += int(mask.sum())
        rounds += 1
    if not kept:
        return np.zeros((0, bounds.dim))
    points = np.concatenate(kept, axis=0)[:count]
    logger.debug("far_outside: %d points after %d rounds", points.shape[0], rounds)
    return points

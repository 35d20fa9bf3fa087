"""Sampled feature spaces, their measures, and the glued patch distance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    step: float
    count: int
    periodic: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"axis {self.name!r}: step must be positive")
        if self.count < 1:
            raise ValueError(f"axis {self.name!r}: needs at least one sample")

    @classmethod
    def symmetric(cls, name: str, half_width: float, step: float, periodic: bool = False) -> "Axis":
        """Samples ``-half_width, ..., half_width`` with the given step."""
        n = int(round(half_width / step))
        if abs(n * step - half_width) > 1e-9 * max(step, half_width):
            raise ValueError(f"axis {name!r}: {half_width} is not a multiple of {step}")
        return cls(name, -n * step, step, 2 * n + 1, periodic)

    @classmethod
    def periodic_circle(cls, name: str, count: int, start: float = -np.pi, period: float = 2 * np.pi) -> "Axis":
        return cls(name, start, period / count, count, True)

    @property
    def values(self) -> np.ndarray:
        return self.min + self.step * np.arange(self.count)

    @property
    def max(self) -> float:
        return self.min + self.step * (self.count - 1)

    def index_of(self, value: float) -> int:
        k = (value - self.min) / self.step
        if self.periodic:
            k = k % self.count
            if self.count - k < 1e-9:
                k = 0.0
        i = int(round(k))
        if abs(k - i) > 1e-6 or not 0 <= i < self.count:
            raise ValueError(f"{value} is not a sample of axis {self.name!r}")
        return i


@dataclass
class FeatureGrid:
    """Cartesian product of sampled axes with per-point measure weights.

    Points are enumerated in row-major order of ``axes``.
    """

    axes: tuple
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.axes = tuple(self.axes)
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        if self.weights is None:
            self.weights = grid_cell_measure(self)
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), self.shape).copy()
        if not (np.all(self.weights > 0) and np.all(np.isfinite(self.weights))):
            raise ValueError("measure weights must be positive and finite")

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(f"grid has no axis {name!r}; axes are {self.names}")

    def axis_index(self, name: str) -> int:
        return self.names.index(self.axis(name).name)

    def coords(self) -> dict:
        """Broadcastable coordinate arrays, one per axis, each of full grid shape."""
        mesh = np.meshgrid(*[a.values for a in self.axes], indexing="ij")
        return {a.name: m for a, m in zip(self.axes, mesh)}

    def points(self) -> np.ndarray:
        """``(size, ndim)`` array of all grid points."""
        return np.stack([m.ravel() for m in self.coords().values()], axis=1)

    def flat_index(self, **coords) -> int:
        idx = tuple(a.index_of(coords[a.name]) for a in self.axes)
        return int(np.ravel_multi_index(idx, self.shape))

    def total_measure(self) -> float:
        return float(self.weights.sum())


def counting_measure(grid_or_count) -> np.ndarray:
    """Unit weight per feature: integrals become plain sums."""
    if isinstance(grid_or_count, FeatureGrid):
        return np.ones(grid_or_count.shape)
    return np.ones(int(grid_or_count))


def grid_cell_measure(grid: FeatureGrid) -> np.ndarray:
    """Uniform cell volume (product of axis steps) at every point."""
    return np.full(grid.shape, float(np.prod([a.step for a in grid.axes])))


def ball_measure(weights, distances, eps: float) -> float:
    """Measure of ``{p : d(p, centre) < eps}`` given each point's distance to the centre."""
    if not eps > 0:
        raise ValueError("ball radius must be positive")
    weights = np.asarray(weights, dtype=float).ravel()
    distances = np.asarray(distances, dtype=float).ravel()
    return float(weights[distances < eps].sum())


def ball_measure_fn(points: Sequence, weights, centre, eps: float, dist: Callable) -> float:
    """``ball_measure`` with distances computed by ``dist(p, centre)``."""
    return ball_measure(weights, [dist(p, centre) for p in points], eps)


@dataclass
class PatchGraph:
    """Symmetrized patch graph: edge ``q -- q'`` iff either lies in the other's patch."""

    matrix: csr_matrix
    points: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def build_patch_graph(points: np.ndarray, in_patch: Callable, distance: Callable) -> PatchGraph:
    """Graph over ``points`` (``(n, d)`` array).

    ``in_patch(P, Q)`` and ``distance(P, Q)`` are broadcasting callables on
    point arrays; ``in_patch(P, Q)`` tells whether ``P`` lies in the patch
    of ``Q``.  Zero-length edges between distinct points are kept with the
    smallest positive weight so they stay distinguishable from non-edges.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    rows, cols, vals = [], [], []
    P = points[:, None, :]
    for start in range(0, n, 512):
        Q = points[None, start:start + 512, :]
        adj = in_patch(P, Q) | in_patch(Q, P)
        d = distance(P, Q)
        i, j = np.nonzero(adj)
        j = j + start
        keep = i != j
        i, j = i[keep], j[keep]
        w = d[i, j - start]
        if np.any(w < 0):
            raise ValueError("negative edge weight")
        rows.append(i)
        cols.append(j)
        vals.append(np.where(w > 0, w, np.finfo(float).tiny))
    m = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return PatchGraph(m, points)


def glued_distances(pg: PatchGraph, source: int) -> np.ndarray:
    """Shortest patch-chain length from ``source`` to every node; ``inf`` if unreachable."""
    return dijkstra(pg.matrix, directed=True, indices=source)


def glued_distance(pg: PatchGraph, p: int, p0: int) -> float:
    return float(glued_distances(pg, p0)[p])

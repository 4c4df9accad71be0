"""Diversity Index of a set of search points.

For a threshold ``theta`` the points form a graph with an edge between any two
distinct points at distance <= theta. ``h(theta) = 1 - C(G(theta))`` where
``C`` is the mean local clustering coefficient, and
``DI = (1/M) * integral_0^M h(theta) dtheta``. ``C(G(theta))`` only changes at
pairwise distances, so the integral is evaluated exactly as a finite sum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import pdist, squareform


def euclidean_distances(points: np.ndarray) -> np.ndarray:
    return squareform(pdist(points, metric="euclidean"))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    metric: Callable[[np.ndarray], np.ndarray] = euclidean_distances

    def __post_init__(self):
        P = np.array(self.points, dtype=np.float64)
        if P.ndim == 1:
            P = P[:, None]
        if P.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(P)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", P)

    def __len__(self):
        return self.points.shape[0]

    def distances(self) -> np.ndarray:
        return self.metric(self.points)


@dataclass(frozen=True)
class ThresholdGraph:
    adjacency: np.ndarray  # symmetric bool, zero diagonal
    theta: float

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def build_graph(cloud, theta: float) -> ThresholdGraph:
    if theta < 0:
        raise ValueError("theta must be >= 0")
    D = _as_cloud(cloud).distances()
    A = D <= theta
    np.fill_diagonal(A, False)
    return ThresholdGraph(A, float(theta))


def _local_coefficients(A: np.ndarray) -> np.ndarray:
    Ai = A.astype(np.int64)
    deg = Ai.sum(axis=1)
    # (A^3)_ii counts each triangle through i twice
    closed = np.einsum("ij,jk,ki->i", Ai, Ai, Ai)
    pairs = deg * (deg - 1)
    out = np.zeros(A.shape[0])
    ok = pairs > 0
    out[ok] = closed[ok] / pairs[ok]
    return out


def local_clustering(g: ThresholdGraph, i: int) -> float:
    """Fraction of neighbor pairs of ``i`` that are adjacent; 0 when ``i`` has fewer than two neighbors."""
    if not 0 <= i < g.n:
        raise IndexError(f"node {i} not in graph of {g.n} nodes")
    return float(_local_coefficients(g.adjacency)[i])


def global_clustering(g: ThresholdGraph) -> float:
    if g.n < 1:
        raise ValueError("empty graph")
    return math.fsum(_local_coefficients(g.adjacency)) / g.n


def clustering_profile(cloud) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints ``d_1 < ... < d_r`` and ``C`` on each ``[d_j, d_{j+1})``.

    For ``theta < d_1`` the graph is empty (C = 0).
    """
    D = _as_cloud(cloud).distances()
    n = D.shape[0]
    iu = np.triu_indices(n, 1)
    levels = np.unique(D[iu])
    values = np.empty(levels.shape[0])
    for j, d in enumerate(levels):
        A = D <= d
        np.fill_diagonal(A, False)
        values[j] = math.fsum(_local_coefficients(A)) / n
    return levels, values


def diversity_index(cloud, M: float) -> float:
    """Exact DI of ``cloud`` over ``[0, M]``.

    ``M`` should bound every pairwise distance; if it does not, a warning is
    issued and the integral is still taken over ``[0, M]`` only.
    """
    cloud = _as_cloud(cloud)
    if len(cloud) < 3:
        raise ValueError("DI needs at least 3 points")
    if not M > 0:
        raise ValueError("M must be > 0")
    levels, values = clustering_profile(cloud)
    if levels.size and levels[-1] > M:
        warnings.warn(f"pairwise distance {levels[-1]:.6g} exceeds M={M:.6g}", RuntimeWarning, stacklevel=2)
    starts = np.minimum(levels, M)
    ends = np.minimum(np.append(levels[1:], M), M)
    area = float(np.sum(values * np.maximum(ends - starts, 0.0)))
    return float(min(max(1.0 - area / M, 0.0), 1.0))


def di_trace(iterates, window: int = 10, M: float | None = None) -> list[tuple[int, float]]:
    """DI of each sliding window ``{x_{k-window+1}, ..., x_k}``, starting at ``k = window - 1``."""
    if window < 3:
        raise ValueError("window must be >= 3")
    pts = np.asarray(getattr(iterates, "iterates", iterates), dtype=np.float64)
    if M is None:
        raise ValueError("M is required (use the region diameter)")
    out = []
    for k in range(window - 1, pts.shape[0]):
        out.append((k, diversity_index(pts[k - window + 1:k + 1], M)))
    return out


def read_cloud(path) -> PointCloud:
    """Point cloud file: one point per line, whitespace-separated floats."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a list of floats") from exc
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} coordinates")
    if not rows:
        raise ValueError(f"{path}: no points")
    return PointCloud(np.array(rows))

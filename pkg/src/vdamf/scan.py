"""LADAR frames, ground removal, clustering, and the planar Gaussian-mixture view."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .filters import wrap_angle

__all__ = [
    "Frame",
    "Cluster",
    "GROUND_MARGIN",
    "DEFAULT_SIGMA",
    "above_ground",
    "remove_ground",
    "cluster_points",
    "merge_clusters",
    "viewing_angle",
]

GROUND_MARGIN = 0.3
DEFAULT_SIGMA = 0.15
GROUND_LABEL = -1


def _frozen(a, shape_tail=None) -> np.ndarray:
    a = np.array(a, dtype=float)
    if shape_tail is not None:
        a = a.reshape((-1,) + shape_tail)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Frame:
    """One sweep of hits in fixed world coordinates.

    ``labels`` (per point: object id, or -1 for ground) and ``truth`` are
    only present in synthetic data.
    """

    frame_id: int
    timestamp: float
    sensor: np.ndarray
    points: np.ndarray
    labels: np.ndarray | None = None
    truth: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sensor", _frozen(self.sensor).reshape(3))
        pts = _frozen(self.points, (3,))
        if not np.all(np.isfinite(pts)):
            raise ValueError("frame contains non-finite points")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError("labels must have one entry per point")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Cluster:
    """Hits attributed to one object, modelled as planar Gaussians of width ``sigma``.

    ``indices`` map back into the source frame's point array when known.
    """

    points: np.ndarray
    sigma: float = DEFAULT_SIGMA
    indices: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = _frozen(self.points, (3,))
        if pts.shape[0] == 0:
            raise ValueError("cluster needs at least one point")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "points", pts)
        if self.indices is not None:
            idx = np.array(self.indices, dtype=np.int64)
            idx.setflags(write=False)
            object.__setattr__(self, "indices", idx)

    @classmethod
    def from_planar(cls, means, sigma: float = DEFAULT_SIGMA, z: float = 1.0) -> "Cluster":
        means = np.asarray(means, dtype=float).reshape(-1, 2)
        return cls(np.column_stack([means, np.full(len(means), z)]), sigma)

    @property
    def planar_means(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.planar_means
        return m.min(axis=0), m.max(axis=0)

    @property
    def centroid(self) -> np.ndarray:
        return self.planar_means.mean(axis=0)

    def __len__(self):
        return self.points.shape[0]


def above_ground(points: np.ndarray, ground_height: float = 0.0,
                 margin: float = GROUND_MARGIN) -> np.ndarray:
    """Boolean mask of points more than ``margin`` above the ground plane."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return points[:, 2] - ground_height > margin


def remove_ground(frame: Frame, ground_height: float = 0.0,
                  margin: float = GROUND_MARGIN) -> np.ndarray:
    return frame.points[above_ground(frame.points, ground_height, margin)]


def cluster_points(points: np.ndarray, gap: float = 1.0, sigma: float = DEFAULT_SIGMA,
                   indices=None) -> list[Cluster]:
    """Single-linkage clusters under planar distance ``<= gap``.

    Clusters come out ordered by their lowest input index, points inside a
    cluster in input order, so the result only depends on the input order
    through that labelling.
    """
    if not gap > 0:
        raise ValueError("gap must be positive")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return []
    if indices is None:
        indices = np.arange(n)
    pairs = cKDTree(points[:, :2]).query_pairs(gap, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, comp = connected_components(graph, directed=False)
    # relabel components by first occurrence
    first = np.full(ncomp, n)
    np.minimum.at(first, comp, np.arange(n))
    order = np.argsort(first, kind="stable")
    rank = np.empty(ncomp, dtype=np.int64)
    rank[order] = np.arange(ncomp)
    comp = rank[comp]
    members = np.argsort(comp, kind="stable")
    bounds = np.searchsorted(comp[members], np.arange(ncomp + 1))
    out = []
    for c in range(ncomp):
        sel = members[bounds[c]:bounds[c + 1]]
        out.append(Cluster(points[sel], sigma, np.asarray(indices)[sel]))
    return out


def merge_clusters(clusters) -> Cluster:
    """Concatenate clusters (same sigma) into one."""
    clusters = list(clusters)
    if not clusters:
        raise ValueError("nothing to merge")
    if len(clusters) == 1:
        return clusters[0]
    idx = None
    if all(c.indices is not None for c in clusters):
        idx = np.concatenate([c.indices for c in clusters])
    return Cluster(np.concatenate([c.points for c in clusters]), clusters[0].sigma, idx)


def viewing_angle(cluster: Cluster, sensor) -> float:
    """Angle of the ray from the cluster centroid to the sensor, in (-pi, pi]."""
    c = cluster.centroid
    sensor = np.asarray(sensor, dtype=float)
    return wrap_angle(math.atan2(sensor[1] - c[1], sensor[0] - c[0]))

"""Vehicle-vs-clutter scoring on pose-normalized occupancy grids.

Each object's hits are moved into a frame tied to its fitted rectangle:
origin at the corner nearest the sensor, ``x`` along the length, ``y``
along the width, both pointing into the object.  Since neither axis
depends on handedness, a vehicle and its mirror image land on the same
cloud.  The cloud is binned into a fixed 3D grid normalized to unit sum
and scored by a linear classifier trained with deterministic
full-batch Pegasos.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .filters import MatchState
from .io import dumps
from .scan import Cluster
from .uncertainty import Measurement
from .visibility import corner_signs

__all__ = [
    "GridConfig",
    "CanonicalCloud",
    "FeatureGrid",
    "LinearClassifier",
    "canonicalize",
    "bin_points",
    "features",
    "train",
    "score",
    "roc_auc",
    "synthetic_examples",
    "DEFAULT_GRID",
]


@dataclass(frozen=True)
class GridConfig:
    """Occupancy grid: ``shape`` cells of side ``cell`` starting at ``origin``.

    The default covers 6 m x 3 m x 2.5 m with a half-meter margin behind the
    anchor corner, where noisy near-face hits fall.
    """

    origin: tuple = (-0.5, -0.5, 0.0)
    cell: float = 0.25
    shape: tuple = (24, 12, 10)

    def __post_init__(self):
        if not self.cell > 0:
            raise ValueError("cell size must be positive")
        if len(self.shape) != 3 or min(self.shape) < 1 or len(self.origin) != 3:
            raise ValueError("grid needs three positive dimensions and a 3D origin")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "cell": self.cell, "shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        known = {"origin", "cell", "shape"}
        if set(d) - known:
            raise ValueError(f"unknown grid keys: {sorted(set(d) - known)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


DEFAULT_GRID = GridConfig()


@dataclass(frozen=True)
class CanonicalCloud:
    points: np.ndarray
    corner: tuple  # target-frame quadrant (kx, ky) of the origin corner
    mirrored: bool = False


@dataclass(frozen=True)
class FeatureGrid:
    counts: np.ndarray
    config: GridConfig = DEFAULT_GRID
    dropped: int = 0

    @property
    def vector(self) -> np.ndarray:
        return self.counts.ravel()


def canonicalize(points, state: MatchState | Measurement, sensor,
                 ground_height: float = 0.0) -> CanonicalCloud:
    """Hits of one object in its rectangle's anchor-corner frame."""
    if isinstance(state, Measurement):
        state = state.state
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("no points to canonicalize")
    kx, ky = corner_signs(state, sensor)
    c, s = math.cos(state.t_theta), math.sin(state.t_theta)
    ax = np.array([c, s])
    ay = np.array([-s, c])
    origin = np.array([state.tx, state.ty]) + 0.5 * kx * state.l * ax + 0.5 * ky * state.w * ay
    d = pts[:, :2] - origin
    out = np.column_stack([-kx * (d @ ax), -ky * (d @ ay), pts[:, 2] - ground_height])
    mirrored = bool(out[:, 1].mean() < 0)
    if mirrored:
        out[:, 1] = -out[:, 1]
    return CanonicalCloud(out, (kx, ky), mirrored)


def bin_points(cloud: CanonicalCloud | np.ndarray, config: GridConfig = DEFAULT_GRID) -> FeatureGrid:
    """Unit-sum occupancy over ``config``; points outside are dropped and counted."""
    pts = cloud.points if isinstance(cloud, CanonicalCloud) else np.asarray(cloud, dtype=float)
    pts = pts.reshape(-1, 3)
    shape = np.array(config.shape)
    idx = np.floor((pts - np.array(config.origin)) / config.cell).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < shape), axis=1)
    flat = np.ravel_multi_index(idx[inside].T, config.shape) if inside.any() else np.zeros(0, np.int64)
    counts = np.bincount(flat, minlength=config.size).astype(float)
    total = counts.sum()
    if total > 0:
        counts /= total
    return FeatureGrid(counts.reshape(config.shape), config, int((~inside).sum()))


def features(points, state, sensor, ground_height: float = 0.0,
             config: GridConfig = DEFAULT_GRID) -> FeatureGrid:
    return bin_points(canonicalize(points, state, sensor, ground_height), config)


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float
    config: GridConfig = DEFAULT_GRID
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(self.config.shape)
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValueError("classifier parameters must be finite")

    def to_dict(self) -> dict:
        return {"grid_config": self.config.to_dict(), "weights": self.weights.ravel().tolist(),
                "bias": float(self.bias), "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearClassifier":
        missing = {"grid_config", "weights", "bias"} - set(d)
        if missing:
            raise ValueError(f"classifier file lacks {sorted(missing)}")
        cfg = GridConfig.from_dict(d["grid_config"])
        w = np.asarray(d["weights"], dtype=float)
        if w.size != cfg.size:
            raise ValueError("weights do not match the grid")
        return cls(w, float(d["bias"]), cfg, dict(d.get("metadata", {})))

    def save(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "LinearClassifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _matrix(grids) -> np.ndarray:
    return np.stack([g.vector if isinstance(g, FeatureGrid) else np.ravel(g) for g in grids])


def train(positives, negatives, reg: float = 1e-3, iterations: int = 1000) -> LinearClassifier:
    """L2-regularized hinge loss by full-batch Pegasos, averaged over the second half.

    The bias rides along as a constant feature and is regularized with the
    weights, which keeps every step an exact function of the data: no
    sampling, no seed.  Loss is the per-sample mean, so duplicating the
    training set leaves the result unchanged.
    """
    positives, negatives = list(positives), list(negatives)
    if not positives or not negatives:
        raise ValueError("both classes need examples")
    if not reg > 0 or iterations < 2:
        raise ValueError("reg must be positive and iterations at least 2")
    config = positives[0].config if isinstance(positives[0], FeatureGrid) else DEFAULT_GRID
    X = np.vstack([_matrix(positives), _matrix(negatives)])
    if X.shape[1] != config.size:
        raise ValueError("feature size does not match the grid")
    X = np.column_stack([X, np.ones(len(X))])
    y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
    n = len(y)
    radius = 1.0 / math.sqrt(reg)
    w = np.zeros(X.shape[1])
    acc = np.zeros_like(w)
    half = iterations // 2
    for t in range(1, iterations + 1):
        active = y * (X @ w) < 1.0
        g = reg * w - (y[active] @ X[active]) / n
        w = w - g / (reg * t)
        nrm = np.linalg.norm(w)
        if nrm > radius:
            w *= radius / nrm
        if t > half:
            acc += w
    w = acc / (iterations - half)
    margins = y * (X @ w)
    meta = {"reg": reg, "iterations": iterations, "n_pos": len(positives), "n_neg": len(negatives),
            "train_accuracy": float(np.mean(margins > 0)),
            "objective": float(0.5 * reg * w @ w + np.mean(np.maximum(0.0, 1.0 - margins)))}
    return LinearClassifier(w[:-1], float(w[-1]), config, meta)


def score(grid, clf: LinearClassifier) -> float:
    """Signed distance-like score; positive means vehicle."""
    counts = grid.counts if isinstance(grid, FeatureGrid) else np.asarray(grid, dtype=float)
    if counts.shape != clf.weights.shape:
        raise ValueError(f"grid shape {counts.shape} does not match classifier {clf.weights.shape}")
    return float(np.sum(clf.weights * counts) + clf.bias)


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    p = np.asarray(pos_scores, dtype=float)
    q = np.asarray(neg_scores, dtype=float)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("both classes need scores")
    ranks = rankdata(np.concatenate([p, q]))
    u = ranks[:len(p)].sum() - len(p) * (len(p) + 1) / 2.0
    return float(u / (len(p) * len(q)))


def _example_scene(rng: np.random.Generator, kind: str, sensor):
    from .synth import Scene, SceneObject, Trajectory, random_clutter

    rngv = rng.uniform(8.0, 30.0)
    az = rng.uniform(-0.4, 0.4) * sensor.azimuth_fov
    x, y = rngv * math.cos(az), rngv * math.sin(az)
    traj = Trajectory("static", {"x": x, "y": y, "heading": float(rng.uniform(-math.pi, math.pi))})
    if kind == "vehicle":
        size = (rng.uniform(3.8, 5.2), rng.uniform(1.6, 2.0), rng.uniform(1.3, 1.9))
        obj = SceneObject(1, "vehicle", traj, size)
    else:
        obj = SceneObject(1, "clutter", traj, ellipsoids=random_clutter(rng))
    return Scene((obj,), sensor, seed=int(rng.integers(0, 2**31)))


def synthetic_examples(n_vehicles: int, n_clutter: int, seed: int = 0, sensor=None,
                       min_points: int = 10, config: GridConfig = DEFAULT_GRID,
                       mirror: bool = False) -> tuple[list, list]:
    """Feature grids of single synthetic vehicles and clutter bundles.

    Objects are placed at random range, bearing and heading in front of
    the sensor, rendered, fitted and canonicalized.  Views with fewer than
    ``min_points`` hits are redrawn.  ``mirror`` reflects every rendered
    frame about the sensor's x axis before fitting.
    """
    from .synth import SensorModel, render_frame
    from .tracker import measure

    sensor = SensorModel() if sensor is None else sensor
    rng = np.random.default_rng(seed)
    out = {"vehicle": [], "clutter": []}
    want = {"vehicle": n_vehicles, "clutter": n_clutter}
    for kind in ("vehicle", "clutter"):
        while len(out[kind]) < want[kind]:
            scene = _example_scene(rng, kind, sensor)
            fr = render_frame(scene, 0.0)
            pts = fr.points[fr.labels == 1]
            if len(pts) < min_points:
                continue
            sens = np.array(fr.sensor, dtype=float)
            if mirror:
                pts = pts * np.array([1.0, -1.0, 1.0])
                sens = sens * np.array([1.0, -1.0, 1.0])
            meas, _ = measure(Cluster(pts), sens)
            out[kind].append(features(pts, meas.state, sens, scene.ground_height, config))
    return out["vehicle"], out["clutter"]

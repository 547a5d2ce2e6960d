"""Multi-target tracking of fitted clusters.

Per frame: drop ground, cluster, predict tracks, assign clusters by a
greedy auction, fit the merged clusters of each track, propagate the
covariance, correct for visibility loss, and run the EKF update.  The
kinematic model is constant turn rate and speed over
``(x, y, heading, speed, yaw_rate)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .filters import DEFAULT_WEIGHTS, FilterWeights, MatchState, wrap_angle
from .optimize import DEFAULT_CONFIG, OptimizerConfig, fit, initialize_state
from .scan import DEFAULT_SIGMA, GROUND_MARGIN, Cluster, Frame, above_ground, cluster_points, \
    merge_clusters, viewing_angle
from .uncertainty import DEFAULT_SIGMA_P, Measurement, VisibleEdges, covariance_or_fallback
from .visibility import (SizeMemory, anchor_correction, detect_visibility_loss, mask_covariance,
                         merge_edges, pinned_edges)

__all__ = [
    "TrackerConfig",
    "Track",
    "Assignment",
    "ctrv_predict",
    "predict",
    "assign",
    "update",
    "measure",
    "segment_frame",
    "step_frame",
    "Tracker",
]

TENTATIVE, CONFIRMED, DEAD = "tentative", "confirmed", "dead"
_FLIP_SPEED = 0.5


@dataclass(frozen=True)
class TrackerConfig:
    gate: float = 2.0
    confirm_hits: int = 3
    miss_limit: int = 5
    accel_std: float = 1.0
    yaw_accel_std: float = 0.5
    init_speed_std: float = 5.0
    init_yaw_rate_std: float = 0.5
    sigma_p: float = DEFAULT_SIGMA_P
    cluster_gap: float = 1.0
    cluster_sigma: float = DEFAULT_SIGMA
    ground_height: float = 0.0
    ground_margin: float = GROUND_MARGIN
    min_cluster_points: int = 3
    visibility_correction: bool = True
    # floor on measurement noise for the fit's view-dependent bias
    model_pos_std: float = 0.15
    model_heading_std: float = math.radians(2.0)

    def __post_init__(self):
        if self.gate <= 0 or self.cluster_gap <= 0 or self.cluster_sigma <= 0 or self.sigma_p <= 0:
            raise ValueError("gate, cluster gap, sigma and sigma_p must be positive")
        if self.confirm_hits < 1 or self.miss_limit < 1 or self.min_cluster_points < 1:
            raise ValueError("counts must be positive")
        if min(self.accel_std, self.yaw_accel_std, self.init_speed_std, self.init_yaw_rate_std) <= 0:
            raise ValueError("noise levels must be positive")
        if self.model_pos_std < 0 or self.model_heading_std < 0:
            raise ValueError("model noise must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        if set(d) - known:
            raise ValueError(f"unknown tracker keys: {sorted(set(d) - known)}")
        return cls(**d)


@dataclass
class Track:
    """Mutable per-target state; mutated only by the tracker that owns it."""

    id: int
    kin_state: np.ndarray
    kin_cov: np.ndarray
    size_memory: SizeMemory
    last_measurement: Measurement | None = None
    age: int = 1
    hits: int = 1
    missed_count: int = 0
    status: str = TENTATIVE
    timestamp: float = 0.0
    size: tuple = (1.8, 4.5)
    # frame point indices behind the last measurement
    last_indices: np.ndarray | None = None

    @property
    def position(self) -> np.ndarray:
        return self.kin_state[:2]

    @property
    def heading(self) -> float:
        return float(self.kin_state[2])

    @property
    def speed(self) -> float:
        return abs(float(self.kin_state[3]))

    def copy(self) -> "Track":
        return Track(self.id, self.kin_state.copy(), self.kin_cov.copy(), self.size_memory.copy(),
                     self.last_measurement, self.age, self.hits, self.missed_count, self.status,
                     self.timestamp, self.size, self.last_indices)

    def to_dict(self) -> dict:
        x = self.kin_state
        return {"id": self.id, "x": float(x[0]), "y": float(x[1]), "heading": float(x[2]),
                "speed": float(x[3]), "yaw_rate": float(x[4]), "w": float(self.size[0]),
                "l": float(self.size[1]), "status": self.status,
                "cov_diag": [float(v) for v in np.diag(self.kin_cov)]}


@dataclass(frozen=True)
class Assignment:
    pairs: tuple
    unassigned_clusters: tuple

    def clusters_for(self, track_id: int) -> list[int]:
        return [c for c, t in self.pairs if t == track_id]


def ctrv_predict(x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Propagated state and its Jacobian."""
    px, py, h, v, w = x
    F = np.eye(5)
    if abs(w) > 1e-6:
        h1 = h + w * dt
        s0, c0, s1, c1 = math.sin(h), math.cos(h), math.sin(h1), math.cos(h1)
        nx = px + v / w * (s1 - s0)
        ny = py + v / w * (c0 - c1)
        F[0, 2] = v / w * (c1 - c0)
        F[0, 3] = (s1 - s0) / w
        F[0, 4] = v * dt * c1 / w - v / w**2 * (s1 - s0)
        F[1, 2] = v / w * (s1 - s0)
        F[1, 3] = (c0 - c1) / w
        F[1, 4] = v * dt * s1 / w - v / w**2 * (c0 - c1)
    else:
        c0, s0 = math.cos(h), math.sin(h)
        nx = px + v * dt * c0
        ny = py + v * dt * s0
        F[0, 2] = -v * dt * s0
        F[0, 3] = dt * c0
        F[0, 4] = -0.5 * v * dt * dt * s0
        F[1, 2] = v * dt * c0
        F[1, 3] = dt * s0
        F[1, 4] = 0.5 * v * dt * dt * c0
        h1 = h + w * dt
    F[2, 4] = dt
    return np.array([nx, ny, wrap_angle(h1), v, w]), F


def _process_noise(x: np.ndarray, dt: float, cfg: TrackerConfig) -> np.ndarray:
    c, s = math.cos(x[2]), math.sin(x[2])
    G = np.array([[0.5 * dt * dt * c, 0.0], [0.5 * dt * dt * s, 0.0], [0.0, 0.5 * dt * dt],
                  [dt, 0.0], [0.0, dt]])
    return G @ np.diag([cfg.accel_std**2, cfg.yaw_accel_std**2]) @ G.T


def predict(track: Track, dt: float, cfg: TrackerConfig) -> Track:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    t = track.copy()
    if dt == 0:
        return t
    x, F = ctrv_predict(track.kin_state, dt)
    P = F @ track.kin_cov @ F.T + _process_noise(track.kin_state, dt, cfg)
    t.kin_state = x
    t.kin_cov = 0.5 * (P + P.T)
    t.timestamp = track.timestamp + dt
    return t


def _rect_distance(p: np.ndarray, track: Track) -> float:
    c, s = math.cos(track.heading), math.sin(track.heading)
    d = p - track.position
    lx, ly = c * d[0] + s * d[1], -s * d[0] + c * d[1]
    w, l = track.size
    ex = max(abs(lx) - l / 2, 0.0)
    ey = max(abs(ly) - w / 2, 0.0)
    return math.hypot(ex, ey)


def assign(clusters: list[Cluster], tracks: list[Track], gate: float) -> Assignment:
    """Greedy nearest-first auction of clusters to (predicted) tracks.

    Clusters go to the nearest track center within ``gate``; any cluster
    left over whose centroid lies within ``gate`` of a track's predicted
    rectangle joins that track.  A cluster never goes to two tracks.
    """
    if not gate > 0:
        raise ValueError("gate must be positive")
    live = [t for t in tracks if t.status != DEAD]
    if not clusters:
        return Assignment((), ())
    if not live:
        return Assignment((), tuple(range(len(clusters))))
    cents = np.array([c.centroid for c in clusters])
    pos = np.array([t.position for t in live])
    dist = np.linalg.norm(cents[:, None, :] - pos[None, :, :], axis=2)
    owner = {}
    # bids in increasing distance; ties broken by (cluster, track) order
    order = np.lexsort((np.tile(np.arange(len(live)), len(clusters)),
                        np.repeat(np.arange(len(clusters)), len(live)), dist.ravel()))
    for k in order:
        ci, ti = divmod(int(k), len(live))
        if dist[ci, ti] > gate:
            break
        if ci not in owner:
            owner[ci] = ti
    for ci in range(len(clusters)):
        if ci in owner:
            continue
        rd = [_rect_distance(cents[ci], t) for t in live]
        ti = int(np.argmin(rd))
        if rd[ti] <= gate:
            owner[ci] = ti
    pairs = tuple((ci, live[ti].id) for ci, ti in sorted(owner.items()))
    unassigned = tuple(ci for ci in range(len(clusters)) if ci not in owner)
    return Assignment(pairs, unassigned)


def _align_heading(measured: float, reference: float) -> float:
    # the filter is symmetric under a half turn
    d = wrap_angle(measured - reference)
    if d > math.pi / 2:
        measured -= math.pi
    elif d < -math.pi / 2:
        measured += math.pi
    return wrap_angle(measured)


def update(track: Track, meas: Measurement, dt: float, cfg: TrackerConfig = TrackerConfig(),
           offset=None) -> Track:
    """Predict by ``dt`` then fuse ``meas``.

    ``offset`` is the visibility re-anchoring shift: the state is moved by
    ``-offset`` for the update and moved back afterwards.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    R = meas.pose_cov
    if np.linalg.eigvalsh(R)[0] < -1e-9 * max(1.0, np.abs(R).max()):
        raise ValueError("measurement covariance is not PSD")
    t = predict(track, dt, cfg)
    _fuse(t, meas, cfg, offset)
    return t


def _fuse(t: Track, meas: Measurement, cfg: TrackerConfig, offset=None) -> None:
    off = np.zeros(2) if offset is None else np.asarray(offset, dtype=float)
    x = t.kin_state.copy()
    x[:2] -= off
    z_theta = _align_heading(meas.state.t_theta, x[2])
    z = np.array([meas.state.tx, meas.state.ty, z_theta])
    H = np.zeros((3, 5))
    H[0, 0] = H[1, 1] = H[2, 2] = 1.0
    innov = z - x[:3]
    innov[2] = wrap_angle(innov[2])
    P = t.kin_cov
    R = meas.pose_cov + np.diag([cfg.model_pos_std**2, cfg.model_pos_std**2, cfg.model_heading_std**2])
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    x = x + K @ innov
    x[2] = wrap_angle(x[2])
    x[:2] += off
    ikh = np.eye(5) - K @ H
    P = ikh @ P @ ikh.T + K @ R @ K.T
    if x[3] < -max(_FLIP_SPEED, 2.0 * math.sqrt(max(P[3, 3], 0.0))):
        # same motion, expressed with forward speed
        x[2] = wrap_angle(x[2] + math.pi)
        x[3] = -x[3]
        J = np.diag([1.0, 1.0, 1.0, -1.0, 1.0])
        P = J @ P @ J
    t.kin_state = x
    t.kin_cov = 0.5 * (P + P.T)
    t.last_measurement = meas
    t.age += 1
    t.hits += 1
    t.missed_count = 0
    if t.status == TENTATIVE and t.hits >= cfg.confirm_hits:
        t.status = CONFIRMED


def measure(cluster: Cluster, sensor, opt: OptimizerConfig = DEFAULT_CONFIG,
            weights: FilterWeights = DEFAULT_WEIGHTS, sigma_p: float = DEFAULT_SIGMA_P,
            heading_hint: float | None = None, timings: dict | None = None
            ) -> tuple[Measurement, object]:
    """Fit one (merged) cluster and attach its pose covariance.

    Without a heading hint the start comes from the minimum-area rectangle.
    """
    t0 = time.perf_counter()
    phi = viewing_angle(cluster, sensor)
    init = initialize_state(cluster, phi, opt, axis=None, heading_hint=heading_hint)
    res = fit(cluster, init, phi, opt, weights)
    free = res.size_free(opt)
    t1 = time.perf_counter()
    cov, degenerate = covariance_or_fallback(res.eval, sigma_p, size_free=free)
    if timings is not None:
        _tick(timings, "fit", t1 - t0)
        _tick(timings, "covariance", time.perf_counter() - t1)
    st = res.state
    if heading_hint is not None:
        st, free = _quarter_align(st, free, heading_hint)
    meas = Measurement(st, cov, res.score, VisibleEdges(), sigma_p, res.eval.phi,
                       len(cluster), degenerate, free)
    return meas, res


def _tick(timings: dict, stage: str, dt: float) -> None:
    timings[stage] = timings.get(stage, 0.0) + dt


def _quarter_align(st: MatchState, free: tuple, hint: float) -> tuple[MatchState, tuple]:
    # the same rectangle described with its heading nearest the hint mod pi;
    # an odd quarter turn swaps length and width
    k = round(wrap_angle(hint - st.t_theta) / (0.5 * math.pi))
    if k % 2 == 0:
        return st, free
    return (MatchState(st.tx, st.ty, wrap_angle(st.t_theta + 0.5 * math.pi * k), st.l, st.w),
            (free[1], free[0]))


def _new_track(tid: int, meas: Measurement, t: float, cfg: TrackerConfig) -> Track:
    st = meas.state
    x = np.array([st.tx, st.ty, st.t_theta, 0.0, 0.0])
    P = np.zeros((5, 5))
    P[:3, :3] = meas.pose_cov
    P[3, 3] = cfg.init_speed_std**2
    P[4, 4] = cfg.init_yaw_rate_std**2
    mem = SizeMemory()
    w_free, l_free = meas.size_free
    mem.append(st.l if l_free else None, st.w if w_free else None)
    return Track(tid, x, P, mem, meas, timestamp=t, size=(st.w, st.l),
                 status=CONFIRMED if cfg.confirm_hits <= 1 else TENTATIVE)


def _group_unassigned(clusters, idx, gate):
    """Single-linkage groups of unassigned clusters by centroid distance."""
    groups = []
    for i in idx:
        c = clusters[i].centroid
        joined = [g for g in groups if min(np.linalg.norm(clusters[j].centroid - c) for j in g) <= gate]
        merged = [i]
        for g in joined:
            merged.extend(g)
            groups.remove(g)
        groups.append(sorted(merged))
    return sorted(groups)


def segment_frame(frame: Frame, cfg: TrackerConfig = TrackerConfig()) -> list[Cluster]:
    """Above-ground clusters of at least ``cfg.min_cluster_points`` hits, indices into the frame."""
    idx = np.flatnonzero(above_ground(frame.points, cfg.ground_height, cfg.ground_margin))
    return [c for c in cluster_points(frame.points[idx], cfg.cluster_gap, cfg.cluster_sigma, idx)
            if len(c) >= cfg.min_cluster_points]


def step_frame(tracks: list[Track], frame: Frame, cfg: TrackerConfig = TrackerConfig(),
               opt: OptimizerConfig = DEFAULT_CONFIG, weights: FilterWeights = DEFAULT_WEIGHTS,
               next_id: int = 1, last_time: float | None = None, timings: dict | None = None):
    """Process one frame.

    Returns ``(tracks, measurements, next_id)`` where ``measurements`` maps
    track id to the measurement fused this frame.  Wall time per stage is
    added into ``timings`` when given.
    """
    if last_time is not None and not frame.timestamp > last_time:
        raise ValueError("frame timestamps must increase")
    t0 = time.perf_counter()
    clusters = segment_frame(frame, cfg)
    sensor = frame.sensor
    t1 = time.perf_counter()

    predicted = []
    for t in tracks:
        if t.status == DEAD:
            continue
        predicted.append(predict(t, frame.timestamp - t.timestamp, cfg))
    asg = assign(clusters, predicted, cfg.gate)
    if timings is not None:
        _tick(timings, "segment", t1 - t0)
        _tick(timings, "assign", time.perf_counter() - t1)

    out, measurements = [], {}
    for t in predicted:
        members = asg.clusters_for(t.id)
        if not members:
            t.age += 1
            t.missed_count += 1
            t.last_indices = None
            t.hits = 0 if t.status == TENTATIVE else t.hits
            if t.missed_count >= cfg.miss_limit:
                t.status = DEAD
            else:
                out.append(t)
            continue
        cl = merge_clusters([clusters[i] for i in members])
        meas, _ = measure(cl, sensor, opt, weights, cfg.sigma_p, heading_hint=t.heading,
                          timings=timings)
        t2 = time.perf_counter()
        mem = t.size_memory
        offset = None
        edges = VisibleEdges()
        if cfg.visibility_correction:
            edges = merge_edges(detect_visibility_loss(meas, mem), pinned_edges(meas))
            if not edges.all_visible:
                offset = anchor_correction(meas, mem, sensor, edges)
                meas = meas.replace(visible_edges=edges,
                                    pose_cov=mask_covariance(meas.pose_cov, edges, meas.state))
        _fuse(t, meas, cfg, offset)
        w_free, l_free = meas.size_free
        mem.append(meas.state.l if l_free and not edges.length_lost else None,
                   meas.state.w if w_free and not edges.width_lost else None)
        t.size = (mem.robust_w if mem.width_samples else meas.state.w,
                  mem.robust_l if mem.length_samples else meas.state.l)
        t.last_indices = cl.indices
        if timings is not None:
            _tick(timings, "update", time.perf_counter() - t2)
        measurements[t.id] = meas
        out.append(t)

    for group in _group_unassigned(clusters, asg.unassigned_clusters, cfg.gate):
        cl = merge_clusters([clusters[i] for i in group])
        meas, _ = measure(cl, sensor, opt, weights, cfg.sigma_p, timings=timings)
        nt = _new_track(next_id, meas, frame.timestamp, cfg)
        nt.last_indices = cl.indices
        measurements[nt.id] = meas
        out.append(nt)
        next_id += 1
    return out, measurements, next_id


@dataclass
class Tracker:
    """Convenience driver holding the track list across frames."""

    cfg: TrackerConfig = field(default_factory=TrackerConfig)
    opt: OptimizerConfig = DEFAULT_CONFIG
    weights: FilterWeights = DEFAULT_WEIGHTS
    tracks: list = field(default_factory=list)
    next_id: int = 1
    last_time: float | None = None

    def step(self, frame: Frame, timings: dict | None = None) -> dict:
        self.tracks, meas, self.next_id = step_frame(self.tracks, frame, self.cfg, self.opt,
                                                     self.weights, self.next_id, self.last_time,
                                                     timings)
        self.last_time = frame.timestamp
        return meas

    def snapshot(self, frame: Frame) -> dict:
        return {"frame_id": frame.frame_id, "timestamp": frame.timestamp,
                "tracks": [t.to_dict() for t in self.tracks]}

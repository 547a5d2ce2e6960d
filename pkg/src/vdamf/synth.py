"""Synthetic scanning-LADAR frames by ray casting.

Vehicles are boxes lifted off the ground by a fixed clearance, clutter is a
bundle of ellipsoids, the ground is the plane ``z = ground_height``.  Rays
are angularly uniform, so hit density on a surface follows its subtended
solid angle without any explicit modelling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filters import wrap_angle
from .scan import Frame

__all__ = [
    "Trajectory",
    "SceneObject",
    "SensorModel",
    "Scene",
    "ray_directions",
    "render_frame",
    "render_frames",
    "render_sequence",
    "load_scenario",
    "scenario_from_dict",
    "random_clutter",
    "FACES",
    "scenario_static",
    "scenario_straight",
    "scenario_circle",
    "scenario_rotate",
    "scenario_many",
]

FACES = ("front", "rear", "left", "right", "top", "bottom")
GROUND_LABEL = -1
VEHICLE_CLEARANCE = 0.35


@dataclass(frozen=True)
class Trajectory:
    """Planar pose as a function of time.

    kinds: ``static`` (x, y, heading), ``linear`` (x, y, heading, speed),
    ``circle`` (cx, cy, radius, speed, phase; counter-clockwise for
    positive speed), ``rotate`` (x, y, heading0, heading1, t0, t1) and
    ``waypoints`` (rows of t, x, y, heading; linear interpolation).
    """

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in ("static", "linear", "circle", "rotate", "waypoints"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "waypoints":
            wp = np.asarray(self.params["points"], dtype=float)
            if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 1 or np.any(np.diff(wp[:, 0]) <= 0):
                raise ValueError("waypoints need rows (t, x, y, heading) with increasing t")

    def pose(self, t: float) -> tuple[float, float, float]:
        p = self.params
        if self.kind == "static":
            return float(p["x"]), float(p["y"]), wrap_angle(p.get("heading", 0.0))
        if self.kind == "linear":
            h = float(p["heading"])
            d = float(p["speed"]) * t
            return p["x"] + d * math.cos(h), p["y"] + d * math.sin(h), wrap_angle(h)
        if self.kind == "circle":
            r = float(p["radius"])
            a = float(p.get("phase", 0.0)) + float(p["speed"]) * t / r
            sgn = 1.0 if p["speed"] >= 0 else -1.0
            return (p["cx"] + r * math.cos(a), p["cy"] + r * math.sin(a),
                    wrap_angle(a + sgn * math.pi / 2))
        if self.kind == "rotate":
            t0, t1 = float(p.get("t0", 0.0)), float(p["t1"])
            f = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
            h = p["heading0"] + f * (p["heading1"] - p["heading0"])
            return float(p["x"]), float(p["y"]), wrap_angle(h)
        wp = np.asarray(p["points"], dtype=float)
        hd = np.unwrap(wp[:, 3])
        return (float(np.interp(t, wp[:, 0], wp[:, 1])), float(np.interp(t, wp[:, 0], wp[:, 2])),
                wrap_angle(float(np.interp(t, wp[:, 0], hd))))

    def to_dict(self) -> dict:
        return {"type": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        d = dict(d)
        return cls(d.pop("type"), d)


@dataclass(frozen=True)
class SceneObject:
    """A vehicle box ``size = (l, w, h)`` or a clutter bundle of ellipsoids.

    Clutter ellipsoids are rows ``(dx, dy, dz, rx, ry, rz)`` in the object
    frame; ``dz`` is the center height above the ground.
    """

    id: int
    kind: str
    trajectory: Trajectory
    size: tuple = (4.5, 1.8, 1.5)
    ellipsoids: tuple = ()
    clearance: float = VEHICLE_CLEARANCE

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("object ids must be non-negative")
        if self.kind not in ("vehicle", "clutter"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.kind == "vehicle":
            if len(self.size) != 3 or min(self.size) <= 0:
                raise ValueError("vehicle size must be three positive numbers")
            if not 0 <= self.clearance < self.size[2]:
                raise ValueError("clearance must lie below the roof")
        else:
            e = np.asarray(self.ellipsoids, dtype=float).reshape(-1, 6)
            if len(e) == 0 or np.any(e[:, 3:] <= 0):
                raise ValueError("clutter needs ellipsoids with positive radii")
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "ellipsoids",
                           tuple(tuple(float(v) for v in row) for row in self.ellipsoids))

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "trajectory": self.trajectory.to_dict()}
        if self.kind == "vehicle":
            d["size"] = list(self.size)
            d["clearance"] = self.clearance
        else:
            d["ellipsoids"] = [list(r) for r in self.ellipsoids]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        known = {"id", "kind", "trajectory", "size", "ellipsoids", "clearance"}
        if set(d) - known:
            raise ValueError(f"unknown object keys: {sorted(set(d) - known)}")
        return cls(int(d["id"]), d["kind"], Trajectory.from_dict(d["trajectory"]),
                   tuple(d.get("size", (4.5, 1.8, 1.5))), tuple(map(tuple, d.get("ellipsoids", ()))),
                   float(d.get("clearance", VEHICLE_CLEARANCE)))


@dataclass(frozen=True)
class SensorModel:
    position: tuple = (0.0, 0.0, 2.0)
    heading: float = 0.0
    azimuth_fov: float = math.radians(120.0)
    azimuth_step: float = math.radians(0.25)
    elevation_min: float = math.radians(-6.0)
    elevation_rows: int = 8
    elevation_step: float = math.radians(1.0)
    range_noise: float = 0.03
    max_range: float = 80.0
    rate: float = 10.0

    def __post_init__(self):
        if self.azimuth_step <= 0 or self.elevation_step <= 0 or self.azimuth_fov <= 0:
            raise ValueError("angular steps and field of view must be positive")
        if self.elevation_rows < 1 or self.range_noise < 0 or self.max_range <= 0 or self.rate <= 0:
            raise ValueError("invalid sensor model")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    def to_dict(self) -> dict:
        return {"position": list(self.position), "heading_deg": math.degrees(self.heading),
                "azimuth_fov_deg": math.degrees(self.azimuth_fov),
                "azimuth_step_deg": math.degrees(self.azimuth_step),
                "elevation_min_deg": math.degrees(self.elevation_min),
                "elevation_rows": self.elevation_rows,
                "elevation_step_deg": math.degrees(self.elevation_step),
                "range_noise": self.range_noise, "max_range": self.max_range, "rate": self.rate}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorModel":
        known = set(cls().to_dict())
        if set(d) - known:
            raise ValueError(f"unknown sensor keys: {sorted(set(d) - known)}")
        kw = {}
        for k, v in d.items():
            if k.endswith("_deg"):
                kw[k[:-4]] = math.radians(float(v))
            elif k == "position":
                kw[k] = tuple(v)
            elif k == "elevation_rows":
                kw[k] = int(v)
            else:
                kw[k] = float(v)
        return cls(**kw)


@dataclass(frozen=True)
class Scene:
    objects: tuple
    sensor: SensorModel = field(default_factory=SensorModel)
    ground_height: float = 0.0
    seed: int = 0
    duration: float = 10.0

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        object.__setattr__(self, "objects", tuple(self.objects))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "duration": self.duration, "ground_height": self.ground_height,
                "sensor": self.sensor.to_dict(), "objects": [o.to_dict() for o in self.objects]}


def scenario_from_dict(d: dict) -> Scene:
    known = {"seed", "duration", "ground_height", "sensor", "objects"}
    if set(d) - known:
        raise ValueError(f"unknown scenario keys: {sorted(set(d) - known)}")
    return Scene(tuple(SceneObject.from_dict(o) for o in d.get("objects", [])),
                 SensorModel.from_dict(d.get("sensor", {})), float(d.get("ground_height", 0.0)),
                 int(d.get("seed", 0)), float(d.get("duration", 10.0)))


def load_scenario(path) -> Scene:
    with open(Path(path)) as fh:
        return scenario_from_dict(json.load(fh))


def random_clutter(rng: np.random.Generator, n_blobs: int | None = None) -> tuple:
    """Irregular bush/tree-like bundle of ellipsoids around the origin."""
    if n_blobs is None:
        n_blobs = int(rng.integers(2, 6))
    rows = []
    for _ in range(n_blobs):
        r = rng.uniform(0.3, 1.2, size=3)
        r[2] = rng.uniform(0.4, 2.0)
        rows.append((rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), r[2] * rng.uniform(0.5, 1.3),
                     r[0], r[1], r[2]))
    return tuple(rows)


def ray_directions(sensor: SensorModel) -> np.ndarray:
    """Unit ray directions, row-major over (elevation, azimuth)."""
    n_az = int(math.floor(sensor.azimuth_fov / sensor.azimuth_step + 1e-9)) + 1
    az = sensor.heading - 0.5 * sensor.azimuth_fov + sensor.azimuth_step * np.arange(n_az)
    el = sensor.elevation_min + sensor.elevation_step * np.arange(sensor.elevation_rows)
    E, A = np.meshgrid(el, az, indexing="ij")
    ce = np.cos(E)
    return np.stack([ce * np.cos(A), ce * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def _box_hits(o_local, d_local, half, zlo, zhi):
    """Slab test for rays in the box frame; returns entry distance and face index."""
    lo = np.array([-half[0], -half[1], zlo])
    hi = np.array([half[0], half[1], zhi])
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d_local
        t0 = (lo - o_local) * inv
        t1 = (hi - o_local) * inv
    tmin = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    tmax = np.where(np.isnan(t0), np.inf, np.maximum(t0, t1))
    # rays parallel to a slab and outside it never hit
    par = d_local == 0
    outside = par & ((o_local < lo) | (o_local > hi))
    t_enter = tmin.max(axis=1)
    t_exit = tmax.min(axis=1)
    ok = (t_enter <= t_exit) & (t_enter > 1e-9) & ~outside.any(axis=1)
    axis = tmin.argmax(axis=1)
    # face ids: x- -> rear, x+ -> front, y- -> left, y+ -> right, z+ -> top, z- -> bottom
    # (right on +y, as for the filter edges)
    neg_side = d_local[np.arange(len(d_local)), axis] > 0
    face = np.where(axis == 0, np.where(neg_side, 1, 0),
                    np.where(axis == 1, np.where(neg_side, 2, 3), np.where(neg_side, 5, 4)))
    return np.where(ok, t_enter, np.inf), face


def _ellipsoid_hits(o_local, d_local, rows):
    best = np.full(len(d_local), np.inf)
    for dx, dy, dz, rx, ry, rz in rows:
        rad = np.array([rx, ry, rz])
        o = (o_local - np.array([dx, dy, dz])) / rad
        d = d_local / rad
        a = np.einsum("ij,ij->i", d, d)
        b = 2.0 * (d @ o)
        c = o @ o - 1.0
        disc = b * b - 4 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t = (-b - sq) / (2 * a)
        t = np.where(ok & (t > 1e-9), t, np.inf)
        best = np.minimum(best, t)
    return best


def _frame_rng(seed: int, frame_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(frame_id)])


def render_frame(scene: Scene, t: float, frame_id: int = 0, sensor: SensorModel | None = None) -> Frame:
    """Cast every ray at time ``t``; nearest surface wins, range noise added along the ray."""
    sensor = scene.sensor if sensor is None else sensor
    origin = np.array(sensor.position)
    dirs = ray_directions(sensor)
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_label = np.full(n, GROUND_LABEL, dtype=np.int64)
    best_face = np.full(n, -1, dtype=np.int64)
    # ground plane
    gz = scene.ground_height
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = (gz - origin[2]) / dirs[:, 2]
    best_t = np.where((dirs[:, 2] < 0) & (tg > 0), tg, np.inf)

    truth_objs = []
    for obj in scene.objects:
        x, y, h = obj.trajectory.pose(t)
        c, s = math.cos(h), math.sin(h)
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> object
        o_local = rot @ (origin - np.array([x, y, gz]))
        d_local = dirs @ rot.T
        if obj.kind == "vehicle":
            l, w, hh = obj.size
            tt, face = _box_hits(o_local, d_local, (l / 2, w / 2), obj.clearance, hh)
        else:
            tt = _ellipsoid_hits(o_local, d_local, obj.ellipsoids)
            face = np.full(n, -1)
        closer = tt < best_t
        best_t = np.where(closer, tt, best_t)
        best_label = np.where(closer, obj.id, best_label)
        best_face = np.where(closer, face, best_face)
        truth_objs.append({"id": obj.id, "kind": obj.kind, "x": x, "y": y, "heading": h,
                           "l": obj.size[0] if obj.kind == "vehicle" else None,
                           "w": obj.size[1] if obj.kind == "vehicle" else None,
                           "h": obj.size[2] if obj.kind == "vehicle" else None})

    keep = np.isfinite(best_t) & (best_t <= sensor.max_range)
    rng = _frame_rng(scene.seed, frame_id)
    noise = rng.normal(0.0, sensor.range_noise, size=n) if sensor.range_noise > 0 else np.zeros(n)
    rng_t = best_t[keep] + noise[keep]
    pts = origin + dirs[keep] * rng_t[:, None]
    labels = best_label[keep]
    faces = best_face[keep]
    for rec in truth_objs:
        sel = labels == rec["id"]
        rec["hits"] = int(sel.sum())
        if rec["kind"] == "vehicle":
            rec["face_hits"] = {f: int(np.sum(faces[sel] == i)) for i, f in enumerate(FACES)}
    truth = {"objects": truth_objs, "ground_height": gz}
    return Frame(frame_id, float(t), origin, pts, labels, truth)


def render_frames(scene: Scene, n_frames: int | None = None, t0: float = 0.0) -> list[Frame]:
    dt = 1.0 / scene.sensor.rate
    if n_frames is None:
        n_frames = int(round(scene.duration * scene.sensor.rate))
    return [render_frame(scene, t0 + k * dt, k) for k in range(n_frames)]


def render_sequence(scene: Scene, out_path, n_frames: int | None = None) -> int:
    """Write the rendered frames as JSON lines; returns the frame count."""
    from .io import write_frames
    frames = render_frames(scene, n_frames)
    write_frames(out_path, frames)
    return len(frames)


def _vehicle(oid, traj, size=(4.5, 1.8, 1.5)):
    return SceneObject(oid, "vehicle", traj, size)


def scenario_static(x: float = 15.0, y: float = 3.0, heading: float = 0.6, seed: int = 0,
                    duration: float = 2.0, **sensor_kw) -> Scene:
    traj = Trajectory("static", {"x": x, "y": y, "heading": heading})
    return Scene((_vehicle(1, traj),), SensorModel(**sensor_kw), seed=seed, duration=duration)


def scenario_straight(speed: float = 5.0, seed: int = 0, duration: float = 5.0, **sensor_kw) -> Scene:
    """Vehicle crossing the field of view on a straight line."""
    traj = Trajectory("linear", {"x": 12.0, "y": -14.0, "heading": math.radians(70.0), "speed": speed})
    return Scene((_vehicle(1, traj),), SensorModel(**sensor_kw), seed=seed, duration=duration)


def scenario_circle(radius: float = 10.0, speed: float = 3.0, center=(22.0, 0.0), seed: int = 0,
                    duration: float | None = None, **sensor_kw) -> Scene:
    """Vehicle circling in front of the sensor; one lap by default."""
    if duration is None:
        duration = 2 * math.pi * radius / abs(speed)
    traj = Trajectory("circle", {"cx": center[0], "cy": center[1], "radius": radius,
                                 "speed": speed, "phase": math.pi})
    return Scene((_vehicle(1, traj),), SensorModel(**sensor_kw), seed=seed, duration=duration)


def scenario_rotate(x: float = 12.0, y: float = 0.0, t0: float = 2.0, t1: float = 2.5,
                    seed: int = 0, duration: float = 5.0, **sensor_kw) -> Scene:
    """Stationary vehicle turning from broadside to tail-on between ``t0`` and ``t1``."""
    traj = Trajectory("rotate", {"x": x, "y": y, "heading0": math.pi / 2, "heading1": 0.0,
                                 "t0": t0, "t1": t1})
    return Scene((_vehicle(1, traj),), SensorModel(**sensor_kw), seed=seed, duration=duration)


def scenario_many(n: int = 50, seed: int = 0, duration: float = 10.0, spacing: float = 9.0,
                  **sensor_kw) -> Scene:
    """``n`` vehicles on parallel lanes at staggered ranges, all in view."""
    rng = np.random.default_rng(seed)
    objs = []
    cols = int(math.ceil(math.sqrt(n)))
    for k in range(n):
        i, j = divmod(k, cols)
        x0 = 12.0 + spacing * i
        y0 = (j - (cols - 1) / 2) * spacing
        heading = float(rng.uniform(-math.pi, math.pi))
        speed = float(rng.uniform(0.0, 2.0))
        traj = Trajectory("linear", {"x": x0, "y": y0, "heading": heading, "speed": speed})
        objs.append(_vehicle(k + 1, traj))
    kw = {"azimuth_fov": math.radians(360.0) - math.radians(0.25)}
    kw.update(sensor_kw)
    return Scene(tuple(objs), SensorModel(**kw), seed=seed, duration=duration)

"""Timing of the per-target fit and of whole tracking runs.

``fit_benchmark`` times initialization, LM fit and covariance on fixed
size clusters for each available kernel backend; ``track_benchmark``
times a tracking run stage by stage.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import kernels
from .filters import DEFAULT_WEIGHTS
from .optimize import DEFAULT_CONFIG
from .scan import Cluster
from .synth import Scene, SceneObject, SensorModel, Trajectory, render_frame
from .tracker import Tracker, TrackerConfig, measure

__all__ = ["bench_clusters", "fit_benchmark", "track_benchmark", "summarize"]


def bench_clusters(n: int, hits: int = 100, seed: int = 0, noise: float = 0.05,
                   max_range: float = 30.0) -> list[tuple[Cluster, np.ndarray]]:
    """``n`` single-vehicle clusters of exactly ``hits`` points with their sensor origins.

    Vehicles get random pose within ``max_range``; views that return fewer
    hits are redrawn, larger ones are subsampled without replacement.
    """
    if n < 1 or hits < 3:
        raise ValueError("need n >= 1 and hits >= 3")
    rng = np.random.default_rng(seed)
    sensor = SensorModel(range_noise=noise)
    out = []
    while len(out) < n:
        r = rng.uniform(8.0, max_range)
        az = rng.uniform(-0.4, 0.4) * sensor.azimuth_fov
        traj = Trajectory("static", {"x": r * math.cos(az), "y": r * math.sin(az),
                                     "heading": float(rng.uniform(-math.pi, math.pi))})
        scene = Scene((SceneObject(1, "vehicle", traj),), sensor, seed=int(rng.integers(0, 2**31)))
        fr = render_frame(scene, 0.0)
        pts = fr.points[fr.labels == 1]
        if len(pts) < hits:
            continue
        pick = np.sort(rng.choice(len(pts), hits, replace=False))
        out.append((Cluster(pts[pick]), np.array(fr.sensor)))
    return out


def summarize(ms) -> dict:
    ms = np.asarray(ms, dtype=float)
    return {"n": int(len(ms)), "mean_ms": float(ms.mean()), "median_ms": float(np.median(ms)),
            "p95_ms": float(np.percentile(ms, 95)), "max_ms": float(ms.max())}


def fit_benchmark(n_fits: int = 1000, hits: int = 100, seed: int = 0, backends=None,
                  opt=DEFAULT_CONFIG, weights=DEFAULT_WEIGHTS, sigma_p: float = 0.05,
                  warmup: int = 20) -> dict:
    """Per-target fit+covariance wall time for each backend, same clusters for all."""
    clusters = bench_clusters(n_fits, hits, seed)
    backends = sorted(kernels.BACKENDS) if backends is None else list(backends)
    report = {"n_fits": n_fits, "hits": hits, "seed": seed, "active_backend": kernels.BACKEND,
              "backends": {}}
    for name in backends:
        with kernels.use_backend(name):
            for cl, sens in clusters[:warmup]:
                measure(cl, sens, opt, weights, sigma_p)
            ms = np.empty(len(clusters))
            iters = np.empty(len(clusters), dtype=np.int64)
            for k, (cl, sens) in enumerate(clusters):
                t0 = time.perf_counter()
                _, res = measure(cl, sens, opt, weights, sigma_p)
                ms[k] = 1e3 * (time.perf_counter() - t0)
                iters[k] = res.iterations
        rec = summarize(ms)
        rec["median_iterations"] = float(np.median(iters))
        report["backends"][name] = rec
    if "compiled" in report["backends"] and "python" in report["backends"]:
        report["speedup"] = (report["backends"]["python"]["mean_ms"]
                             / report["backends"]["compiled"]["mean_ms"])
    return report


def track_benchmark(frames, cfg: TrackerConfig | None = None, opt=DEFAULT_CONFIG,
                    weights=DEFAULT_WEIGHTS) -> dict:
    """Stage timings (ms per frame) and track counts over a frame sequence."""
    tr = Tracker(cfg=cfg or TrackerConfig(), opt=opt, weights=weights)
    timings = {}
    wall, n_meas = [], []
    for fr in frames:
        t0 = time.perf_counter()
        meas = tr.step(fr, timings)
        wall.append(1e3 * (time.perf_counter() - t0))
        n_meas.append(len(meas))
    n = max(len(wall), 1)
    fits = max(sum(n_meas), 1)
    return {"frames": len(wall),
            "frame_ms": summarize(wall) if wall else None,
            "stage_ms_per_frame": {k: 1e3 * v / n for k, v in sorted(timings.items())},
            "fit_cov_ms_per_target": 1e3 * (timings.get("fit", 0.0) + timings.get("covariance", 0.0)) / fits,
            "targets_per_frame": float(np.mean(n_meas)) if n_meas else 0.0,
            "final_tracks": len(tr.tracks),
            "backend": kernels.BACKEND}

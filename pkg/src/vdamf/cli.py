"""Command-line front end.

Subcommands::

    vdamf generate  (SCENARIO | --preset NAME) --out frames.jsonl
    vdamf fit       FRAMES --frame-id K --cluster I
    vdamf track     FRAMES --out tracks.jsonl [--trace-csv trace.csv]
    vdamf train-clf (--frames F [F ...] | --synthetic N) --out clf.json
    vdamf discriminate FRAMES TRACKS --classifier clf.json
    vdamf bench     [FRAMES] [--fits N]
    vdamf filter-surface --w W --l L --beta-deg B --out surface.csv

Results are JSON on stdout (or in ``--out`` where the command produces a
single document).  Failures print ``{"error": {...}}`` on stderr and exit
with 2 for bad input or 3 for a failure while running.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import kernels
from .config import RunConfig, load_config
from .discriminator import LinearClassifier, features, score, synthetic_examples, train
from .filters import MatchState, build_filter
from .io import dumps, read_frames, read_jsonl, write_jsonl
from .scan import Frame
from .tracker import Tracker, measure, segment_frame

__all__ = ["main", "build_parser", "InputError"]

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3

PRESETS = ("static", "straight", "circle", "rotate", "many")


class InputError(Exception):
    """Bad arguments, files or configuration (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _emit(obj, path=None) -> None:
    text = dumps(obj)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def _load_inputs(fn, *a, **kw):
    # anything that goes wrong while reading inputs is the caller's fault
    try:
        return fn(*a, **kw)
    except InputError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise InputError(f"{type(e).__name__}: {e}") from None


def _run_config(args) -> tuple[RunConfig, bool]:
    """Effective config and whether the seed was set explicitly."""
    explicit = args.seed is not None
    if args.config:
        raw = _load_inputs(lambda p: json.loads(Path(p).read_text()), args.config)
        cfg = _load_inputs(load_config, args.config)
        explicit = explicit or (isinstance(raw, dict) and "seed" in raw)
    else:
        cfg = RunConfig()
    cfg = _load_inputs(cfg.with_seed, args.seed)
    return cfg, explicit


def _frames(path) -> list[Frame]:
    frames = _load_inputs(read_frames, path)
    if not frames:
        raise InputError(f"{path}: no frames")
    return frames


def _meta(cfg: RunConfig, command: str, **kw) -> dict:
    d = {"command": command, "seed": cfg.seed, "backend": kernels.BACKEND}
    d.update(kw)
    return d


# ---- generate ----

def _preset_scene(name: str, seed: int):
    from . import synth
    return getattr(synth, f"scenario_{name}")(seed=seed)


def cmd_generate(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    from dataclasses import replace
    from .synth import load_scenario, render_sequence

    if (args.scenario is None) == (args.preset is None):
        raise InputError("give exactly one of SCENARIO or --preset")
    if args.out is None:
        raise InputError("generate needs --out")
    if args.preset is not None:
        scene = _preset_scene(args.preset, cfg.seed)
    else:
        scene = _load_inputs(load_scenario, args.scenario)
        # the scenario's own seed stands unless one was given explicitly
        if explicit_seed:
            scene = replace(scene, seed=cfg.seed)
    if args.frames is not None and args.frames < 1:
        raise InputError("--frames must be positive")
    n = render_sequence(scene, args.out, args.frames)
    return {"command": "generate", "seed": scene.seed, "frames": n, "objects": len(scene.objects),
            "out": str(args.out)}


# ---- fit ----

def cmd_fit(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    frames = _frames(args.frames)
    by_id = {f.frame_id: f for f in frames}
    fid = frames[0].frame_id if args.frame_id is None else args.frame_id
    if fid not in by_id:
        raise InputError(f"frame {fid} not in {args.frames}")
    frame = by_id[fid]
    clusters = segment_frame(frame, cfg.tracker)
    if not 0 <= args.cluster < len(clusters):
        raise InputError(f"cluster {args.cluster} out of range; frame {fid} has {len(clusters)}")
    cl = clusters[args.cluster]
    meas, res = measure(cl, frame.sensor, cfg.optimizer, cfg.filter, cfg.tracker.sigma_p)
    out = res.to_dict()
    out.update({"covariance": meas.pose_cov.tolist(), "degenerate": meas.degenerate,
                "size_free": {"w": bool(meas.size_free[0]), "l": bool(meas.size_free[1])},
                "phi": meas.phi, "n_points": len(cl), "frame_id": fid, "cluster": args.cluster,
                "n_clusters": len(clusters)})
    out["meta"] = _meta(cfg, "fit")
    return out


# ---- track ----

TRACE_FIELDS = ("frame_id", "timestamp", "id", "status", "x", "y", "heading", "speed", "yaw_rate",
                "w", "l", "measured", "meas_x", "meas_y", "meas_heading", "meas_w", "meas_l")


def _track_records(frames, cfg: RunConfig):
    tr = Tracker(cfg=cfg.tracker, opt=cfg.optimizer, weights=cfg.filter)
    for fr in frames:
        meas = tr.step(fr)
        tracks = []
        for t in tr.tracks:
            d = t.to_dict()
            m = meas.get(t.id)
            if m is not None:
                s = m.state
                d["measurement"] = {"tx": s.tx, "ty": s.ty, "t_theta": s.t_theta, "w": s.w, "l": s.l,
                                    "score": m.score}
                d["indices"] = t.last_indices.tolist() if t.last_indices is not None else []
            tracks.append(d)
        yield {"frame_id": fr.frame_id, "timestamp": fr.timestamp, "tracks": tracks}


def _trace_rows(rec):
    for t in rec["tracks"]:
        m = t.get("measurement")
        yield {"frame_id": rec["frame_id"], "timestamp": rec["timestamp"], "id": t["id"],
               "status": t["status"], "x": t["x"], "y": t["y"], "heading": t["heading"],
               "speed": t["speed"], "yaw_rate": t["yaw_rate"], "w": t["w"], "l": t["l"],
               "measured": int(m is not None),
               "meas_x": m["tx"] if m else "", "meas_y": m["ty"] if m else "",
               "meas_heading": m["t_theta"] if m else "", "meas_w": m["w"] if m else "",
               "meas_l": m["l"] if m else ""}


def cmd_track(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    if args.out is None:
        raise InputError("track needs --out")
    frames = _frames(args.frames)
    records = list(_track_records(frames, cfg))
    write_jsonl(args.out, records)
    if args.trace_csv:
        with open(args.trace_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
            w.writeheader()
            for rec in records:
                w.writerows(_trace_rows(rec))
    ids = {t["id"] for rec in records for t in rec["tracks"]}
    confirmed = {t["id"] for rec in records for t in rec["tracks"] if t["status"] == "confirmed"}
    return _meta(cfg, "track", frames=len(records), tracks_seen=len(ids),
                 tracks_confirmed=len(confirmed), out=str(args.out))


# ---- classifier ----

def _labeled_examples(frames, cfg: RunConfig, purity: float = 0.8):
    """Feature grids of segmented clusters labelled by their majority object."""
    pos, neg = [], []
    for fr in frames:
        if fr.labels is None or not fr.truth:
            raise InputError(f"frame {fr.frame_id} has no labels; train-clf needs synthetic frames")
        kind = {o["id"]: o["kind"] for o in fr.truth.get("objects", [])}
        for cl in segment_frame(fr, cfg.tracker):
            if len(cl) < cfg.classifier.min_points:
                continue
            lab = fr.labels[cl.indices]
            ids, counts = np.unique(lab, return_counts=True)
            top = ids[np.argmax(counts)]
            if top not in kind or counts.max() < purity * len(lab):
                continue
            meas, _ = measure(cl, fr.sensor, cfg.optimizer, cfg.filter, cfg.tracker.sigma_p)
            g = features(cl.points, meas.state, fr.sensor, cfg.tracker.ground_height, cfg.grid)
            (pos if kind[top] == "vehicle" else neg).append(g)
    return pos, neg


def cmd_train_clf(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    if args.out is None:
        raise InputError("train-clf needs --out")
    if bool(args.frames) == (args.synthetic is not None):
        raise InputError("give exactly one of --frames or --synthetic")
    if args.synthetic is not None:
        if args.synthetic < 1:
            raise InputError("--synthetic must be positive")
        pos, neg = synthetic_examples(args.synthetic, args.synthetic, cfg.seed,
                                      min_points=cfg.classifier.min_points, config=cfg.grid)
        source = {"synthetic": args.synthetic}
    else:
        frames = [f for p in args.frames for f in _frames(p)]
        pos, neg = _labeled_examples(frames, cfg)
        source = {"frames": [str(p) for p in args.frames]}
    if not pos or not neg:
        raise InputError(f"need examples of both classes, got {len(pos)} vehicle / {len(neg)} clutter")
    clf = train(pos, neg, cfg.classifier.reg, cfg.classifier.iterations)
    clf.metadata.update({"seed": cfg.seed, **source})
    clf.save(args.out)
    return _meta(cfg, "train-clf", out=str(args.out), **clf.metadata)


def cmd_discriminate(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    clf = _load_inputs(LinearClassifier.load, args.classifier)
    frames = {f.frame_id: f for f in _frames(args.frames)}
    recs = _load_inputs(lambda p: list(read_jsonl(p)), args.tracks)
    per_track = defaultdict(list)
    for rec in recs:
        fr = frames.get(rec.get("frame_id"))
        if fr is None:
            raise InputError(f"track record for frame {rec.get('frame_id')} has no matching frame")
        for t in rec.get("tracks", []):
            m = t.get("measurement")
            idx = t.get("indices") or []
            if m is None or len(idx) < cfg.classifier.min_points:
                continue
            st = MatchState(m["tx"], m["ty"], m["t_theta"], m["w"], m["l"])
            g = features(fr.points[np.asarray(idx, dtype=np.int64)], st, fr.sensor,
                         cfg.tracker.ground_height, clf.config)
            per_track[t["id"]].append(score(g, clf))
    tracks = [{"id": tid, "frames_scored": len(s), "mean_score": float(np.mean(s)),
               "min_score": float(np.min(s)), "max_score": float(np.max(s)),
               "vehicle": bool(np.mean(s) > 0)}
              for tid, s in sorted(per_track.items())]
    return {"tracks": tracks, "meta": _meta(cfg, "discriminate", classifier=str(args.classifier))}


# ---- bench ----

def cmd_bench(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    from .bench import fit_benchmark, track_benchmark

    if args.fits < 0 or args.hits < 3:
        raise InputError("--fits must be >= 0 and --hits >= 3")
    backends = None
    if args.backends:
        backends = [b.strip() for b in args.backends.split(",") if b.strip()]
        missing = set(backends) - set(kernels.BACKENDS)
        if missing:
            raise InputError(f"unavailable backends {sorted(missing)}; have {sorted(kernels.BACKENDS)}")
    out = {"meta": _meta(cfg, "bench")}
    if args.fits:
        out["fit"] = fit_benchmark(args.fits, args.hits, cfg.seed, backends, cfg.optimizer,
                                   cfg.filter, cfg.tracker.sigma_p)
    if args.frames:
        frames = _frames(args.frames)
        if args.max_frames:
            frames = frames[:args.max_frames]
        out["track"] = track_benchmark(frames, cfg.tracker, cfg.optimizer, cfg.filter)
    return out


# ---- filter surface ----

def cmd_filter_surface(args, cfg: RunConfig, explicit_seed: bool) -> dict:
    if args.out is None:
        raise InputError("filter-surface needs --out")
    if not args.step > 0:
        raise InputError("--step must be positive")
    try:
        st = MatchState(0.0, 0.0, 0.0, args.w, args.l)
    except ValueError as e:
        raise InputError(str(e)) from None
    # theta = 0, so beta = -phi
    spec = build_filter(st, -math.radians(args.beta_deg), cfg.filter)
    xmax = args.l / 2 + cfg.filter.surround_pad_length / 2 + args.margin
    ymax = args.w / 2 + cfg.filter.surround_pad_width / 2 + args.margin
    xs = np.arange(-xmax, xmax + 0.5 * args.step, args.step)
    ys = np.arange(-ymax, ymax + 0.5 * args.step, args.step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    S = spec.value_at(X, Y)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "s", "alpha_s"])
        for x, y, s in zip(X.ravel(), Y.ravel(), S.ravel()):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(s)), repr(float(spec.alpha * s))])
    return _meta(cfg, "filter-surface", out=str(args.out), beta=spec.beta, alpha=spec.alpha,
                 nx=len(xs), ny=len(ys))


# ---- wiring ----

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run configuration JSON (every key optional)")
    common.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    common.add_argument("--dump-config", metavar="PATH",
                        help="write the effective configuration to PATH before running")

    p = _Parser(prog="vdamf", description="Matched-filter vehicle pose estimation and tracking.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="render a scenario to a frame file")
    g.add_argument("scenario", nargs="?", help="scenario JSON")
    g.add_argument("--preset", choices=PRESETS, help="built-in scenario instead of a file")
    g.add_argument("--frames", type=int, help="number of frames (default: scenario duration)")
    g.add_argument("--out", help="frame file (JSON lines)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", parents=[common], help="fit one cluster of one frame")
    f.add_argument("frames")
    f.add_argument("--frame-id", type=int, help="default: first frame")
    f.add_argument("--cluster", type=int, default=0, help="cluster index in segmentation order")
    f.add_argument("--out", help="write the result here instead of stdout")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("track", parents=[common], help="run the tracker over a frame file")
    t.add_argument("frames")
    t.add_argument("--out", help="per-frame track states (JSON lines)")
    t.add_argument("--trace-csv", help="also write a flat CSV trace for plotting")
    t.set_defaults(func=cmd_track)

    c = sub.add_parser("train-clf", parents=[common], help="train the vehicle classifier")
    c.add_argument("--frames", nargs="+", help="labelled frame files")
    c.add_argument("--synthetic", type=int, help="generate this many examples of each class")
    c.add_argument("--out", help="classifier JSON")
    c.set_defaults(func=cmd_train_clf)

    d = sub.add_parser("discriminate", parents=[common], help="score tracks with a classifier")
    d.add_argument("frames")
    d.add_argument("tracks", help="output of the track command")
    d.add_argument("--classifier", required=True)
    d.add_argument("--out", help="write the result here instead of stdout")
    d.set_defaults(func=cmd_discriminate)

    b = sub.add_parser("bench", parents=[common], help="time fits and tracking")
    b.add_argument("frames", nargs="?", help="frame file for a timed tracking run")
    b.add_argument("--fits", type=int, default=1000, help="single-target fits to time (0 skips)")
    b.add_argument("--hits", type=int, default=100, help="points per benchmark cluster")
    b.add_argument("--backends", help="comma-separated subset of kernel backends")
    b.add_argument("--max-frames", type=int, help="only the first N frames of the run")
    b.add_argument("--out", help="write the report here instead of stdout")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("filter-surface", parents=[common], help="rasterize a filter to CSV")
    s.add_argument("--w", type=float, default=1.8)
    s.add_argument("--l", type=float, default=4.5)
    s.add_argument("--beta-deg", type=float, default=30.0, help="sensor angle in degrees")
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--margin", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_filter_surface)
    return p


# commands whose --out holds the main product; the rest write their JSON result there
_PRODUCES_FILE = {"generate", "track", "train-clf", "filter-surface"}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg, explicit = _run_config(args)
        if args.dump_config:
            _emit(cfg.to_dict(), args.dump_config)
    except InputError as e:
        return _fail(EXIT_INPUT, "input", str(e))
    try:
        result = args.func(args, cfg, explicit)
    except InputError as e:
        return _fail(EXIT_INPUT, "input", str(e))
    except Exception as e:  # noqa: BLE001 - reported as a structured error
        return _fail(EXIT_RUNTIME, "runtime", f"{type(e).__name__}: {e}")
    out = getattr(args, "out", None)
    _emit(result, None if args.command in _PRODUCES_FILE else out)
    return EXIT_OK


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(dumps({"error": {"kind": kind, "message": message, "exit_code": code}}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())

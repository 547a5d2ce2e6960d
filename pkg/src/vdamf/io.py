"""Line-delimited JSON for frame sequences and other records."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .scan import Frame

__all__ = ["frame_to_dict", "frame_from_dict", "write_frames", "read_frames", "write_jsonl",
           "read_jsonl", "dumps"]


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj) -> str:
    # repr-exact floats keep round trips bit-identical
    return json.dumps(obj, default=_default, separators=(",", ":"))


def frame_to_dict(frame: Frame) -> dict:
    d = {"frame_id": int(frame.frame_id), "timestamp": float(frame.timestamp),
         "sensor": frame.sensor.tolist(), "points": frame.points.tolist()}
    if frame.labels is not None:
        d["labels"] = frame.labels.tolist()
    if frame.truth is not None:
        d["truth"] = frame.truth
    return d


def frame_from_dict(d: dict) -> Frame:
    pts = d.get("points") or []
    return Frame(int(d["frame_id"]), float(d["timestamp"]), d["sensor"],
                 np.asarray(pts, dtype=float).reshape(-1, 3), d.get("labels"), d.get("truth"))


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(Path(path), "w") as fh:
        for r in records:
            fh.write(dumps(r))
            fh.write("\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: {e.msg}") from None


def write_frames(path, frames: Iterable[Frame]) -> None:
    write_jsonl(path, (frame_to_dict(f) for f in frames))


def read_frames(path) -> list[Frame]:
    """Frames from a JSON-lines file; timestamps must strictly increase."""
    frames = [frame_from_dict(d) for d in read_jsonl(path)]
    for a, b in zip(frames, frames[1:]):
        if not b.timestamp > a.timestamp:
            raise ValueError(f"frame {b.frame_id}: timestamps must strictly increase")
    return frames

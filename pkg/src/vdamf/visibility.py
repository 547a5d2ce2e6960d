"""Partial-visibility handling between the fitter and the tracker.

When part of a vehicle drops out of view the fitted rectangle shrinks to
the visible portion and its center slides.  A robust size memory detects
the shrink, the corner nearest the sensor serves as the fixed point for
re-anchoring the track, and the unobserved directions are removed from
the measurement covariance.

Target frame: ``+x`` is the front, ``+y`` the right side, so
``dl = dx_f - dx_r`` and ``dw = dy_r - dy_l``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .filters import MatchState
from .uncertainty import FALLBACK_COVARIANCE, Measurement, VisibleEdges

__all__ = [
    "SizeMemory",
    "EdgeFrameDelta",
    "loss_threshold",
    "detect_visibility_loss",
    "edge_deltas_to_center",
    "anchor_correction",
    "corner_signs",
    "resize_shift",
    "mask_covariance",
    "pinned_edges",
    "merge_edges",
    "EDGE_TO_CENTER",
]

MIN_HISTORY = 5
HISTORY = 50
LOSS_ABS = 0.5
LOSS_REL = 0.2
UNOBSERVED_VAR = float(FALLBACK_COVARIANCE[0, 0])

# (center x, center y) from (dx_f, dx_r, dy_r, dy_l)
EDGE_TO_CENTER = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]])


class SizeMemory:
    """Bounded history of measured sizes with running medians.

    Owned and mutated by a single track.
    """

    def __init__(self, maxlen: int = HISTORY, min_history: int = MIN_HISTORY):
        if maxlen < 1 or min_history < 1:
            raise ValueError("history sizes must be positive")
        self.maxlen = maxlen
        self.min_history = min_history
        self.length_samples = deque(maxlen=maxlen)
        self.width_samples = deque(maxlen=maxlen)

    def append(self, l: float | None, w: float | None) -> None:
        """Record a measured size; ``None`` skips a dimension seen only in part."""
        if (l is not None and not l > 0) or (w is not None and not w > 0):
            raise ValueError("sizes must be positive")
        if l is not None:
            self.length_samples.append(float(l))
        if w is not None:
            self.width_samples.append(float(w))

    def __len__(self):
        return min(len(self.length_samples), len(self.width_samples))

    @property
    def ready_l(self) -> bool:
        return len(self.length_samples) >= self.min_history

    @property
    def ready_w(self) -> bool:
        return len(self.width_samples) >= self.min_history

    @property
    def ready(self) -> bool:
        return self.ready_l or self.ready_w

    @property
    def robust_l(self) -> float:
        return float(np.median(self.length_samples)) if self.length_samples else math.nan

    @property
    def robust_w(self) -> float:
        return float(np.median(self.width_samples)) if self.width_samples else math.nan

    def copy(self) -> "SizeMemory":
        m = SizeMemory(self.maxlen, self.min_history)
        m.length_samples.extend(self.length_samples)
        m.width_samples.extend(self.width_samples)
        return m


@dataclass(frozen=True)
class EdgeFrameDelta:
    dx_f: float
    dx_r: float
    dy_r: float
    dy_l: float

    @property
    def dl(self) -> float:
        return self.dx_f - self.dx_r

    @property
    def dw(self) -> float:
        return self.dy_r - self.dy_l


def loss_threshold(robust: float) -> float:
    return max(LOSS_ABS, LOSS_REL * robust)


def _sensor_local(state: MatchState, phi: float) -> tuple[float, float]:
    # unit direction to the sensor in the target frame
    b = phi - state.t_theta
    return math.cos(b), math.sin(b)


def detect_visibility_loss(meas: Measurement, memory: SizeMemory) -> VisibleEdges:
    """Flag the far edge of any dimension that came out short.

    The sensor direction is taken from ``meas.phi``.
    """
    st = meas.state
    sx, sy = _sensor_local(st, meas.phi)
    front = rear = right = left = True
    if memory.ready_l and memory.robust_l - st.l > loss_threshold(memory.robust_l):
        if sx >= 0:
            rear = False
        else:
            front = False
    if memory.ready_w and memory.robust_w - st.w > loss_threshold(memory.robust_w):
        if sy >= 0:
            left = False
        else:
            right = False
    return VisibleEdges(front, rear, right, left)


def pinned_edges(meas: Measurement) -> VisibleEdges:
    """Far edges of any dimension the fit left pinned at a size bound.

    A pinned size means the points carry no information about that
    extent (a broadside view has no depth, a tail view no length), so
    the far edge is treated as unseen regardless of the size memory.
    """
    w_free, l_free = meas.size_free
    sx, sy = _sensor_local(meas.state, meas.phi)
    front = rear = right = left = True
    if not l_free:
        if sx >= 0:
            rear = False
        else:
            front = False
    if not w_free:
        if sy >= 0:
            left = False
        else:
            right = False
    return VisibleEdges(front, rear, right, left)


def merge_edges(a: VisibleEdges, b: VisibleEdges) -> VisibleEdges:
    """An edge is visible only if both flag sets say so."""
    return VisibleEdges(a.front and b.front, a.rear and b.rear, a.right and b.right, a.left and b.left)


def edge_deltas_to_center(delta: EdgeFrameDelta, t_theta: float) -> tuple[float, float, float, float]:
    """World-frame center shift and size change ``(dtx, dty, dl, dw)``."""
    local = EDGE_TO_CENTER @ np.array([delta.dx_f, delta.dx_r, delta.dy_r, delta.dy_l])
    c, s = math.cos(t_theta), math.sin(t_theta)
    return (c * local[0] - s * local[1], s * local[0] + c * local[1], delta.dl, delta.dw)


def corner_signs(state: MatchState, sensor) -> tuple[float, float]:
    """Target-frame quadrant ``(+-1, +-1)`` of the corner nearest ``sensor``."""
    c, s = math.cos(state.t_theta), math.sin(state.t_theta)
    d = np.asarray(sensor, dtype=float)[:2] - np.array([state.tx, state.ty])
    lx, ly = c * d[0] + s * d[1], -s * d[0] + c * d[1]
    return (1.0 if lx >= 0 else -1.0), (1.0 if ly >= 0 else -1.0)


def resize_shift(state: MatchState, sensor, dl: float, dw: float) -> np.ndarray:
    """Center shift for a size change ``(dl, dw)`` that keeps the nearest corner fixed."""
    kx, ky = corner_signs(state, sensor)
    c, s = math.cos(state.t_theta), math.sin(state.t_theta)
    ox, oy = -0.5 * kx * dl, -0.5 * ky * dw
    return np.array([c * ox - s * oy, s * ox + c * oy])


def anchor_correction(meas: Measurement, memory: SizeMemory, sensor,
                      edges: VisibleEdges | None = None, dims=None) -> np.ndarray:
    """Center offset from the measured rectangle to the remembered-size one.

    The corner of the measured rectangle nearest ``sensor`` stays fixed.
    ``dims = (length, width)`` selects the dimensions to correct; by
    default those flagged as lost in ``edges`` (detected when omitted).
    The result points away from the sensor when the measurement is short.
    """
    st = meas.state
    if dims is None:
        if edges is None:
            edges = detect_visibility_loss(meas, memory)
        dims = (edges.length_lost, edges.width_lost)
    use_l = bool(dims[0]) and memory.ready_l
    use_w = bool(dims[1]) and memory.ready_w
    if not (use_l or use_w):
        return np.zeros(2)
    dl = memory.robust_l - st.l if use_l else 0.0
    dw = memory.robust_w - st.w if use_w else 0.0
    return resize_shift(st, sensor, dl, dw)


def mask_covariance(pose_cov, visible_edges: VisibleEdges, state: MatchState) -> np.ndarray:
    """Drop the information carried by unobserved edges.

    The center coordinate along a dimension is the mean of its two edges;
    with one of them unseen the measurement says nothing about it.  That
    target-frame direction is decoupled and given the fallback prior
    variance (or its own, if larger); the remaining marginals are kept.
    """
    p = np.asarray(pose_cov, dtype=float)
    if visible_edges.all_visible:
        return p.copy()
    c, s = math.cos(state.t_theta), math.sin(state.t_theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    local = rot.T @ p @ rot
    for axis, lost in ((0, visible_edges.length_lost), (1, visible_edges.width_lost)):
        if lost:
            var = max(local[axis, axis], UNOBSERVED_VAR)
            local[axis, :] = 0.0
            local[:, axis] = 0.0
            local[axis, axis] = var
    out = rot @ local @ rot.T
    return 0.5 * (out + out.T)

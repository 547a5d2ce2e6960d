"""View-dependent adaptive matched filter construction.

The filter lives in its own local frame: x runs along the vehicle length,
y across its width, origin at the rectangle center.  It is a sum of
axis-aligned rectangles of constant height:

    surround   (l + 1.5) x (w + 1.0)   -0.25
    interior   l x w                    +0.35   (net +0.10 over the surround)
    side edge  l or (l - 0.8) x 0.6    |sin(beta)|
    end edge   w or (w - 0.6) x 0.8    |cos(beta)|

where ``beta = t_theta - phi`` is the angle between the vehicle heading and
the direction from the vehicle to the sensor.  Edges sit on the sides that
face the sensor; the heavier one spans the full side.

Every rectangle bound is an affine function of one size parameter
(x bounds of ``l``, y bounds of ``w``), and every height an explicit
function of ``t_theta``.  Those coefficients are carried on :class:`Rect`
so the match kernel can differentiate through the filter shape.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

__all__ = [
    "MatchState",
    "Rect",
    "FilterWeights",
    "FilterSpec",
    "rect_table",
    "build_filter",
    "normalize_filter",
    "filter_energy",
    "wrap_angle",
    "DEFAULT_WEIGHTS",
]

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(float(a), TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class MatchState:
    """Pose ``(tx, ty, t_theta)`` and size ``(w, l)`` of a filter placement."""

    tx: float
    ty: float
    t_theta: float
    w: float
    l: float

    def __post_init__(self):
        vals = (self.tx, self.ty, self.t_theta, self.w, self.l)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite MatchState: {vals}")
        if self.w <= 0 or self.l <= 0:
            raise ValueError(f"filter size must be positive, got w={self.w}, l={self.l}")
        object.__setattr__(self, "t_theta", wrap_angle(self.t_theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.t_theta, self.w, self.l])

    @classmethod
    def from_array(cls, p) -> "MatchState":
        return cls(float(p[0]), float(p[1]), float(p[2]), float(p[3]), float(p[4]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.tx, self.ty])


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle of constant height in the filter frame.

    ``kx0``/``kx1`` are d(bound)/dl for the x bounds, ``ky0``/``ky1`` are
    d(bound)/dw for the y bounds; ``dheight``/``ddheight`` are the first and
    second derivatives of the height with respect to ``t_theta``.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    height: float
    kind: str = "region"
    kx0: float = 0.0
    kx1: float = 0.0
    ky0: float = 0.0
    ky1: float = 0.0
    dheight: float = 0.0
    ddheight: float = 0.0

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def scaled(self, k: float) -> "Rect":
        return Rect(self.xmin, self.xmax, self.ymin, self.ymax, self.height * k, self.kind,
                    self.kx0, self.kx1, self.ky0, self.ky1, self.dheight * k, self.ddheight * k)


@dataclass(frozen=True)
class FilterWeights:
    """Region weights and dimensions of the filter (defaults from the hand-tuned table)."""

    surround: float = -0.25
    interior: float = 0.35
    edge_gain: float = 1.0
    surround_pad_length: float = 1.5
    surround_pad_width: float = 1.0
    side_depth: float = 0.6
    end_depth: float = 0.8
    edge_epsilon: float = 1e-3

    def __post_init__(self):
        if self.surround >= 0 or self.interior <= 0 or self.edge_gain < 0:
            raise ValueError("need surround < 0 < interior and edge_gain >= 0")
        for name in ("surround_pad_length", "surround_pad_width", "side_depth", "end_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def scaled(self, k: float) -> "FilterWeights":
        """All region heights multiplied by ``k`` (geometry unchanged)."""
        if k <= 0:
            raise ValueError("scale must be positive")
        return FilterWeights(self.surround * k, self.interior * k, self.edge_gain * k,
                             self.surround_pad_length, self.surround_pad_width,
                             self.side_depth, self.end_depth, self.edge_epsilon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FilterWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown filter weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "FilterWeights":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_WEIGHTS = FilterWeights()


# Column layout of a filter table: one row per rectangle.
X0, X1, Y0, Y1, KX0, KX1, KY0, KY1, H, DH, DDH = range(11)
TABLE_COLUMNS = 11


def rect_table(rects: Sequence[Rect]) -> np.ndarray:
    return np.array([(r.xmin, r.xmax, r.ymin, r.ymax, r.kx0, r.kx1, r.ky0, r.ky1,
                      r.height, r.dheight, r.ddheight) for r in rects], dtype=float)


@dataclass(frozen=True)
class FilterSpec:
    """A built filter.  ``table`` is the kernel-facing form of ``rects``."""

    table: np.ndarray = field(repr=False)
    kinds: tuple
    beta: float
    alpha: float
    phi: float

    @cached_property
    def rects(self) -> tuple:
        return tuple(Rect(*row[:4], row[H], kind, *row[KX0:H], row[DH], row[DDH])
                     for row, kind in zip(self.table.tolist(), self.kinds))

    def value_at(self, x, y) -> np.ndarray:
        """Unnormalized filter height ``s`` at filter-frame coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for r in self.rects:
            out += r.height * ((x >= r.xmin) & (x < r.xmax) & (y >= r.ymin) & (y < r.ymax))
        return out

    def scaled(self, k: float) -> "FilterSpec":
        t = self.table.copy()
        t[:, H:] *= k
        t.setflags(write=False)
        return FilterSpec(t, self.kinds, self.beta, self.alpha / k, self.phi)


def _build_rows(w: float, l: float, beta: float, weights: FilterWeights):
    g = weights.edge_gain
    sb, cb = math.sin(beta), math.cos(beta)
    pl, pw = weights.surround_pad_length / 2, weights.surround_pad_width / 2
    hl, hw = l / 2, w / 2
    rows = [
        (-hl - pl, hl + pl, -hw - pw, hw + pw, -0.5, 0.5, -0.5, 0.5, weights.surround, 0.0, 0.0),
        (-hl, hl, -hw, hw, -0.5, 0.5, -0.5, 0.5, weights.interior, 0.0, 0.0),
    ]
    kinds = ["surround", "interior"]
    # The sensor lies along (cos beta, -sin beta) in the filter frame.
    sy = -1.0 if sb > 0 else 1.0
    ex = 1.0 if cb > 0 else -1.0
    # ties within rounding (beta at an odd multiple of pi/4) go to the side edge
    side_dominant = abs(sb) >= abs(cb) - 1e-12
    ds, de = weights.side_depth, weights.end_depth

    if abs(sb) >= weights.edge_epsilon:
        if w <= ds:
            y0, ky0, y1, ky1 = -hw, -0.5, hw, 0.5
        elif sy > 0:
            y0, ky0, y1, ky1 = hw - ds, 0.5, hw, 0.5
        else:
            y0, ky0, y1, ky1 = -hw, -0.5, -hw + ds, -0.5
        x0, x1 = -hl, hl
        if not side_dominant:
            if ex > 0:
                x1 = hl - de
            else:
                x0 = -hl + de
        if x1 > x0:
            rows.append((x0, x1, y0, y1, -0.5, 0.5, ky0, ky1,
                         g * abs(sb), g * math.copysign(1.0, sb) * cb, -g * abs(sb)))
            kinds.append("side")
    if abs(cb) >= weights.edge_epsilon:
        if l <= de:
            x0, kx0, x1, kx1 = -hl, -0.5, hl, 0.5
        elif ex > 0:
            x0, kx0, x1, kx1 = hl - de, 0.5, hl, 0.5
        else:
            x0, kx0, x1, kx1 = -hl, -0.5, -hl + de, -0.5
        y0, y1 = -hw, hw
        if side_dominant:
            if sy > 0:
                y1 = hw - ds
            else:
                y0 = -hw + ds
        if y1 > y0:
            rows.append((x0, x1, y0, y1, kx0, kx1, -0.5, 0.5,
                         g * abs(cb), -g * math.copysign(1.0, cb) * sb, -g * abs(cb)))
            kinds.append("end")
    return rows, tuple(kinds)


def build_filter(state: MatchState, phi: float, weights: FilterWeights = DEFAULT_WEIGHTS,
                 alpha: float | None = None) -> FilterSpec:
    """Filter for ``state`` seen from viewing angle ``phi``.

    ``alpha`` overrides the normalization (used to freeze it across
    finite-difference probes); by default it is computed exactly.
    """
    if state.w <= 0 or state.l <= 0:
        raise ValueError("filter size must be positive")
    beta = wrap_angle(state.t_theta - phi)
    rows, kinds = _build_rows(state.w, state.l, beta, weights)
    table = np.array(rows)
    table.setflags(write=False)
    if alpha is None:
        alpha = normalize_filter(table)
    return FilterSpec(table, kinds, beta, float(alpha), float(phi))


def build_filter_with_energy(state: MatchState, phi: float,
                             weights: FilterWeights = DEFAULT_WEIGHTS):
    """:func:`build_filter` plus the energy derivatives it was normalized with.

    Returns ``(spec, (e, grad, hess))``; saves a second energy pass when the
    caller needs both.
    """
    if state.w <= 0 or state.l <= 0:
        raise ValueError("filter size must be positive")
    beta = wrap_angle(state.t_theta - phi)
    rows, kinds = _build_rows(state.w, state.l, beta, weights)
    table = np.array(rows)
    table.setflags(write=False)
    energy = filter_energy(table, derivatives=True)
    if not energy[0] > 0:
        raise ValueError("filter has zero energy")
    return FilterSpec(table, kinds, beta, 1.0 / math.sqrt(energy[0]), float(phi)), energy


def _as_table(rects) -> np.ndarray:
    if isinstance(rects, np.ndarray):
        return rects
    rects = list(rects)
    if not rects:
        raise ValueError("filter has no regions")
    return rect_table(rects)


def filter_energy(rects, derivatives: bool = False):
    """Exact integral of ``s**2`` over the plane.

    The plane is cut along every rectangle boundary; inside each cell the
    net height is constant.  With ``derivatives=True`` also returns the
    gradient and Hessian of the energy in ``(tx, ty, t_theta, w, l)``.
    ``rects`` is a sequence of :class:`Rect` or a filter table.
    """
    table = _as_table(rects)
    if table.shape[0] == 0:
        raise ValueError("filter has no regions")
    e, g_t, g_w, g_l, h_tt, h_tw, h_tl, h_wl = kernels.energy_kernel(table, derivatives)
    if not derivatives:
        return e
    grad = np.array([0.0, 0.0, g_t, g_w, g_l])
    hess = np.zeros((5, 5))
    hess[2, 2] = h_tt
    hess[2, 3] = hess[3, 2] = h_tw
    hess[2, 4] = hess[4, 2] = h_tl
    hess[3, 4] = hess[4, 3] = h_wl
    return e, grad, hess


def normalize_filter(rects) -> float:
    """Normalization ``alpha = 1 / sqrt(integral of s**2)``."""
    e = filter_energy(rects)
    if not e > 0:
        raise ValueError("filter has zero energy")
    return 1.0 / math.sqrt(e)

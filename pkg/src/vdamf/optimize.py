"""Levenberg-Marquardt fitting of the filter pose and size.

The objective is the normalized response over ``p = (tx, ty, t_theta, w, l)``.
Steps solve ``(-H + lambda D) delta = g`` with the full second-order
Hessian; ``D`` is the Marquardt scaling ``max(|diag H|, 1)``, shared between
tx and ty, and ``lambda`` is doubled until the system matrix is safely
positive definite.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .filters import DEFAULT_WEIGHTS, FilterWeights, MatchState, build_filter, wrap_angle
from .match import MatchEval, evaluate
from .scan import Cluster

__all__ = ["OptimizerConfig", "FitResult", "initialize_state", "min_area_axis", "fit", "PD_FLOOR"]

PD_FLOOR = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 50
    lm_lambda_init: float = 1e-3
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 0.1
    position_tol: float = 1e-3
    angle_tol: float = 1e-3
    w_bounds: tuple = (0.8, 3.5)
    l_bounds: tuple = (1.0, 12.0)
    max_retries: int = 30
    # differentiate through the normalization (see fit)
    normalization_derivatives: bool = True

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_retries < 1:
            raise ValueError("iteration limits must be positive")
        if not (self.lm_lambda_init > 0 and self.lm_lambda_up > 1 > self.lm_lambda_down > 0):
            raise ValueError("need lambda_init > 0 and lambda_up > 1 > lambda_down > 0")
        if self.position_tol <= 0 or self.angle_tol <= 0:
            raise ValueError("tolerances must be positive")
        for lo, hi in (self.w_bounds, self.l_bounds):
            if not 0 < lo < hi:
                raise ValueError("size bounds must satisfy 0 < min < max")
        object.__setattr__(self, "w_bounds", tuple(float(v) for v in self.w_bounds))
        object.__setattr__(self, "l_bounds", tuple(float(v) for v in self.l_bounds))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["w_bounds"] = list(self.w_bounds)
        d["l_bounds"] = list(self.l_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("w_bounds", "l_bounds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


DEFAULT_CONFIG = OptimizerConfig()


@dataclass(frozen=True)
class FitResult:
    state: MatchState
    score: float
    iterations: int
    converged: bool
    eval: MatchEval
    initial_score: float
    scores: tuple = ()

    def size_free(self, cfg: "OptimizerConfig" = None) -> tuple:
        """Whether ``(w, l)`` ended strictly inside their bounds."""
        cfg = DEFAULT_CONFIG if cfg is None else cfg
        w, l = self.state.w, self.state.l
        return (cfg.w_bounds[0] < w < cfg.w_bounds[1], cfg.l_bounds[0] < l < cfg.l_bounds[1])

    def to_dict(self) -> dict:
        s = self.state
        return {"state": {"tx": s.tx, "ty": s.ty, "t_theta": s.t_theta, "w": s.w, "l": s.l},
                "score": self.score, "iterations": self.iterations, "converged": self.converged}


def _clamp(state: MatchState, cfg: OptimizerConfig) -> MatchState:
    w = min(max(state.w, cfg.w_bounds[0]), cfg.w_bounds[1])
    l = min(max(state.l, cfg.l_bounds[0]), cfg.l_bounds[1])
    if w == state.w and l == state.l:
        return state
    return MatchState(state.tx, state.ty, state.t_theta, w, l)


def min_area_axis(means: np.ndarray) -> float:
    """Orientation in [0, pi/2) of the minimum-area rectangle around ``means``."""
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    if kernels.min_area_axis_kernel is not None:
        return kernels.min_area_axis_kernel(means[:, 0], means[:, 1])
    try:
        hull = means[ConvexHull(means).vertices]
    except (QhullError, ValueError):
        return 0.0
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2))
    c, s = np.cos(angles), np.sin(angles)
    u = hull @ np.vstack([c, s])
    v = hull @ np.vstack([-s, c])
    area = np.ptp(u, axis=0) * np.ptp(v, axis=0)
    # first of any near-ties, as a sequential scan would pick
    return float(angles[np.flatnonzero(area < area.min() + 1e-12)[0]])


def initialize_state(cluster: Cluster, phi: float, cfg: OptimizerConfig = DEFAULT_CONFIG,
                     axis: float | None = 0.0, heading_hint: float | None = None) -> MatchState:
    """Start from the cluster's bounding box.

    The box is taken in the frame rotated by ``axis`` (world axes by
    default; ``None`` uses the minimum-area rectangle).  The length axis
    follows the longer box side.  Of the two headings along that axis the
    one pointing toward the sensor is taken, which puts the end edge on the
    sensor-facing end.

    ``heading_hint`` (e.g. a track's predicted heading) replaces all of
    that: the box is taken along the hint and its extent along the hint is
    the length, even when shorter than the width.
    """
    if heading_hint is not None:
        return _init_along(cluster, heading_hint, cfg)
    if len(cluster) == 0:
        raise ValueError("empty cluster")
    m = cluster.planar_means
    if axis is None:
        axis = min_area_axis(m)
    c, s = math.cos(axis), math.sin(axis)
    local = m @ np.array([[c, -s], [s, c]])
    lo, hi = local.min(axis=0), local.max(axis=0)
    ext = hi - lo
    mid = 0.5 * (lo + hi)
    center = np.array([c * mid[0] - s * mid[1], s * mid[0] + c * mid[1]])
    if ext[0] >= ext[1]:
        theta, l, w = axis, ext[0], ext[1]
    else:
        theta, l, w = axis + math.pi / 2, ext[1], ext[0]
    if math.cos(theta - phi) < -1e-12:
        theta += math.pi
    state = MatchState(float(center[0]), float(center[1]), wrap_angle(theta), max(w, 1e-6), max(l, 1e-6))
    return _clamp(state, cfg)


def _init_along(cluster: Cluster, heading: float, cfg: OptimizerConfig) -> MatchState:
    c, s = math.cos(heading), math.sin(heading)
    local = cluster.planar_means @ np.array([[c, -s], [s, c]])
    lo, hi = local.min(axis=0), local.max(axis=0)
    mid = 0.5 * (lo + hi)
    ext = hi - lo
    center = (c * mid[0] - s * mid[1], s * mid[0] + c * mid[1])
    state = MatchState(float(center[0]), float(center[1]), wrap_angle(heading),
                       max(float(ext[1]), 1e-6), max(float(ext[0]), 1e-6))
    return _clamp(state, cfg)


def _evaluate(cluster, state, phi, weights, cfg, with_points=True):
    return evaluate(cluster, state, phi, weights, with_points=with_points,
                    normalization_derivatives=cfg.normalization_derivatives)


def _apply(state: MatchState, delta: np.ndarray, cfg: OptimizerConfig) -> MatchState:
    p = state.as_array() + delta
    p[2] = wrap_angle(p[2])
    p[3] = min(max(p[3], cfg.w_bounds[0]), cfg.w_bounds[1])
    p[4] = min(max(p[4], cfg.l_bounds[0]), cfg.l_bounds[1])
    return MatchState.from_array(p)


def _small(delta: np.ndarray, cfg: OptimizerConfig) -> bool:
    return (max(abs(delta[0]), abs(delta[1]), abs(delta[3]), abs(delta[4])) < cfg.position_tol
            and abs(delta[2]) < cfg.angle_tol)


class _DampedSystem:
    """``(neg_h + lam D) x = g`` for any ``lam`` from one eigendecomposition.

    With ``D = diag(max(|diag neg_h|, 1))`` (the two translation entries
    replaced by their mean, so ``D`` commutes with planar rotations) the system is congruent to
    ``S + lam I``, ``S = D^-1/2 neg_h D^-1/2``, whose eigenvalues are those
    of ``S`` shifted by ``lam``.  ``solve`` doubles ``lam`` until the
    smallest of them clears :data:`PD_FLOOR`.
    """

    def __init__(self, neg_h: np.ndarray, g: np.ndarray):
        d = np.abs(np.diag(neg_h))
        d[:2] = 0.5 * abs(neg_h[0, 0] + neg_h[1, 1])
        self.q = 1.0 / np.sqrt(np.maximum(d, 1.0))
        sc = neg_h * np.outer(self.q, self.q)
        self.mu, self.vec = np.linalg.eigh(0.5 * (sc + sc.T))
        self.gs = self.vec.T @ (self.q * g)

    def solve(self, lam: float) -> tuple[np.ndarray, float]:
        while self.mu[0] + lam <= PD_FLOOR:
            lam *= 2.0
        return self.q * (self.vec @ (self.gs / (self.mu + lam))), lam


def fit(cluster: Cluster, init: MatchState, phi: float, cfg: OptimizerConfig = DEFAULT_CONFIG,
        weights: FilterWeights = DEFAULT_WEIGHTS, sensor=None) -> FitResult:
    """Maximize the normalized response starting from ``init``.

    A step is kept only when the normalized score (with the normalization
    recomputed at the new size and view) increases.  With
    ``cfg.normalization_derivatives`` the step is computed from derivatives
    of that same score; otherwise the normalization is frozen inside the
    derivatives.  When ``sensor`` is given the viewing angle is refreshed
    from the current position after every accepted step.
    """
    if len(cluster) == 0:
        raise ValueError("empty cluster")
    if not isinstance(init, MatchState):
        raise TypeError("init must be a MatchState")
    if sensor is None and kernels.fit_kernel is not None:
        return _fit_compiled(cluster, init, phi, cfg, weights)
    sensor_xy = None if sensor is None else np.asarray(sensor, dtype=float)[:2]
    state = _clamp(init, cfg)
    cur = _evaluate(cluster, state, phi, weights, cfg)
    initial = cur.value
    scores = [cur.value]
    lam = cfg.lm_lambda_init
    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        system = _DampedSystem(-cur.hess, cur.grad)
        accepted = False
        for _ in range(cfg.max_retries):
            delta, lam = system.solve(lam)
            cand_state = _apply(state, delta, cfg)
            cand_phi = phi
            if sensor_xy is not None:
                cand_phi = math.atan2(sensor_xy[1] - cand_state.ty, sensor_xy[0] - cand_state.tx)
            cand = _evaluate(cluster, cand_state, cand_phi, weights, cfg)
            if cand.value > cur.value:
                step = cand_state.as_array() - state.as_array()
                step[2] = wrap_angle(step[2])
                state, cur, phi = cand_state, cand, cand_phi
                scores.append(cur.value)
                lam = max(lam * cfg.lm_lambda_down, 1e-12)
                accepted = True
                if _small(step, cfg):
                    converged = True
                break
            if _small(delta, cfg):
                # no improving step exists at this resolution
                converged = True
                break
            lam *= cfg.lm_lambda_up
        if converged or not accepted:
            break
    return FitResult(state, cur.value, it, converged, cur, initial, tuple(scores))


def _fit_compiled(cluster, init, phi, cfg, weights) -> FitResult:
    # same loop as fit, run inside the compiled backend
    pts = cluster.points
    wt = (weights.surround, weights.interior, weights.edge_gain, weights.surround_pad_length,
          weights.surround_pad_width, weights.side_depth, weights.end_depth, weights.edge_epsilon)
    st, it, converged, initial, scores, final = kernels.fit_kernel(
        pts[:, 0], pts[:, 1], cluster.sigma, init.as_array(), phi, wt, cfg.max_iterations,
        cfg.lm_lambda_init, cfg.lm_lambda_up, cfg.lm_lambda_down, cfg.position_tol, cfg.angle_tol,
        cfg.w_bounds[0], cfg.w_bounds[1], cfg.l_bounds[0], cfg.l_bounds[1], cfg.max_retries,
        cfg.normalization_derivatives, PD_FLOOR)
    state = MatchState(*st)
    value, alpha, grad, hess, partials = final
    cur = MatchEval(value, grad, hess, partials, alpha, state, float(phi),
                    build_filter(state, phi, weights, alpha=alpha))
    return FitResult(state, value, it, converged, cur, initial, tuple(scores))

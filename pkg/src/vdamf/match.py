"""Closed-form matched-filter response and its derivatives.

A hit is a planar Gaussian; integrating it over an axis-aligned rectangle
factors into two 1-D step integrals (erf), so the response of a
rectangle-built filter to the whole mixture is a finite sum.  Data are
moved into the filter frame rather than the filter rotated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .filters import (DEFAULT_WEIGHTS, FilterSpec, FilterWeights, MatchState, Rect, build_filter,
                      build_filter_with_energy, filter_energy)
from .scan import Cluster

__all__ = [
    "LocalPoints",
    "MatchEval",
    "step_integral",
    "rect_integral",
    "to_filter_frame",
    "from_filter_frame",
    "evaluate",
    "response",
]

_SQRT2 = math.sqrt(2.0)


def step_integral(x_a, x_m, sigma):
    """Mass of ``N(x_m, sigma)`` above the step at ``x_a``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return 0.5 * math.erfc(-(x_m - x_a) / (_SQRT2 * sigma))


def rect_integral(rect: Rect, m, sigma: float) -> float:
    """Integral of a unit planar Gaussian at ``m`` over ``rect``, times its height."""
    fx = step_integral(rect.xmin, m[0], sigma) - step_integral(rect.xmax, m[0], sigma)
    fy = step_integral(rect.ymin, m[1], sigma) - step_integral(rect.ymax, m[1], sigma)
    return rect.height * fx * fy


class LocalPoints(NamedTuple):
    coords: np.ndarray
    origin: np.ndarray
    t_theta: float


def _rot(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def to_filter_frame(means, m0, t_theta: float) -> LocalPoints:
    """``R(-t_theta) (m_i - m0)`` for every planar mean."""
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    m0 = np.asarray(m0, dtype=float).reshape(2)
    coords = (means - m0) @ _rot(-t_theta).T
    return LocalPoints(coords, m0, float(t_theta))


def from_filter_frame(local: LocalPoints) -> np.ndarray:
    return local.coords @ _rot(local.t_theta).T + local.origin


@dataclass(frozen=True)
class MatchEval:
    """Normalized response at one placement with its derivatives.

    ``grad``/``hess`` are over ``(tx, ty, t_theta, w, l)``.
    ``point_partials_full`` holds, per hit, the 5x2 matrix of partials of
    the gradient of that hit's own term with respect to the hit's
    ``(x, y)``; ``point_partials`` is its 3x2 pose block.
    """

    value: float
    grad: np.ndarray
    hess: np.ndarray
    point_partials_full: np.ndarray | None
    alpha: float
    state: MatchState
    phi: float
    filter: FilterSpec

    @property
    def point_partials(self) -> np.ndarray | None:
        if self.point_partials_full is None:
            return None
        return self.point_partials_full[:, :3]

    @property
    def grad_t(self) -> np.ndarray:
        return self.grad[:3]

    @property
    def grad_w(self) -> np.ndarray:
        return self.grad[3:]

    @property
    def hess_t(self) -> np.ndarray:
        return self.hess[:3, :3]


def evaluate(cluster: Cluster, state: MatchState, phi: float,
             weights: FilterWeights = DEFAULT_WEIGHTS, *, alpha: float | None = None,
             with_points: bool = True, normalization_derivatives: bool = False,
             backend: str | None = None, spec: FilterSpec | None = None) -> MatchEval:
    """Response of the filter placed at ``state`` to ``cluster``.

    The normalization is a constant inside the derivatives unless
    ``normalization_derivatives`` is set, in which case ``grad``, ``hess``
    and the point partials also carry its dependence on
    ``(t_theta, w, l)``.
    """
    if len(cluster) == 0:
        raise ValueError("empty cluster")
    energy = None
    if spec is None:
        if normalization_derivatives and alpha is None:
            spec, energy = build_filter_with_energy(state, phi, weights)
        else:
            spec = build_filter(state, phi, weights, alpha=alpha)
    kern = kernels.get_kernel(backend)
    m = cluster.planar_means
    s, g, hmat, cols = kern(m[:, 0], m[:, 1], state.tx, state.ty, state.t_theta,
                            cluster.sigma, spec.table, with_points)
    a = spec.alpha
    value = a * s
    grad = a * g
    hess = a * hmat
    partials = None
    if cols is not None:
        # each term depends on its hit only through (m_i - t)
        partials = -a * cols[:, :5]
    if normalization_derivatives:
        e, de, d2e = energy if energy is not None else filter_energy(spec.table, derivatives=True)
        # alpha = e**-1/2
        da = -0.5 * e**-1.5 * de
        d2a = 0.75 * e**-2.5 * np.outer(de, de) - 0.5 * e**-1.5 * d2e
        grad = grad + s * da
        hess = hess + np.outer(da, g) + np.outer(g, da) + s * d2a
        if partials is not None:
            partials = partials - da[None, :, None] * cols[:, 5][:, None, :]
    return MatchEval(float(value), grad, 0.5 * (hess + hess.T), partials, a, state, float(phi), spec)


def response(cluster: Cluster, state: MatchState, phi: float,
             weights: FilterWeights = DEFAULT_WEIGHTS, alpha: float | None = None,
             backend: str | None = None) -> float:
    """Scalar response only (still runs the full kernel)."""
    return evaluate(cluster, state, phi, weights, alpha=alpha, with_points=False,
                    backend=backend).value

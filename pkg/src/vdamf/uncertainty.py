"""First-order pose covariance from per-hit perturbations.

At an optimum the pose gradient vanishes; moving hit ``i`` by ``dp_i``
shifts the optimum by ``-H^{-1} G_i dp_i`` with ``H`` the pose Hessian and
``G_i`` the 3x2 partials of that hit's gradient term.  Independent
isotropic hit noise of std ``sigma_p`` then gives

    R_t = sigma_p**2 H^{-1} (sum_i G_i G_i^T) H^{-1}.

``H`` is negative definite at a maximum; both inverses flank a PSD matrix,
so no sign flip is needed.

The fit also estimates ``(w, l)``, and a perturbed hit moves the size
optimum too, which in turn drags the center.  By default the sensitivity
is therefore taken through the full 5x5 system and the pose block of the
result reported; ``coupled=False`` gives the pose-only form with size held
fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .filters import MatchState
from .match import MatchEval

__all__ = [
    "SingularHessianError",
    "VisibleEdges",
    "Measurement",
    "pose_covariance",
    "covariance_or_fallback",
    "FALLBACK_COVARIANCE",
    "DEFAULT_SIGMA_P",
]

DEFAULT_SIGMA_P = 0.05
FALLBACK_COVARIANCE = np.diag([1.0, 1.0, math.radians(30.0) ** 2])
FALLBACK_COVARIANCE.setflags(write=False)
_DET_RTOL = 1e-12


class SingularHessianError(ValueError):
    """The pose Hessian is too close to singular to invert."""


@dataclass(frozen=True)
class VisibleEdges:
    """Which rectangle edges the current measurement actually observed."""

    front: bool = True
    rear: bool = True
    right: bool = True
    left: bool = True

    @property
    def all_visible(self) -> bool:
        return self.front and self.rear and self.right and self.left

    @property
    def length_lost(self) -> bool:
        return not (self.front and self.rear)

    @property
    def width_lost(self) -> bool:
        return not (self.right and self.left)

    def to_dict(self) -> dict:
        return {"front": self.front, "rear": self.rear, "right": self.right, "left": self.left}


@dataclass(frozen=True)
class Measurement:
    """One fitted cluster as handed to the tracker."""

    state: MatchState
    pose_cov: np.ndarray
    score: float
    visible_edges: VisibleEdges = field(default_factory=VisibleEdges)
    sigma_p: float = DEFAULT_SIGMA_P
    phi: float = 0.0
    n_points: int = 0
    degenerate: bool = False
    # (w, l) strictly inside their bounds; a pinned size measured nothing
    size_free: tuple = (True, True)

    def __post_init__(self):
        c = np.array(self.pose_cov, dtype=float)
        if c.shape != (3, 3) or not np.all(np.isfinite(c)):
            raise ValueError("pose_cov must be a finite 3x3 matrix")
        if not np.allclose(c, c.T, rtol=0, atol=1e-12 * max(1.0, np.abs(c).max())):
            raise ValueError("pose_cov must be symmetric")
        c = 0.5 * (c + c.T)
        if np.linalg.eigvalsh(c)[0] < -1e-9 * max(1.0, np.abs(c).max()):
            raise ValueError("pose_cov must be positive semi-definite")
        c.setflags(write=False)
        object.__setattr__(self, "pose_cov", c)

    def replace(self, **kw) -> "Measurement":
        d = {k: getattr(self, k) for k in ("state", "pose_cov", "score", "visible_edges", "sigma_p",
                                           "phi", "n_points", "degenerate", "size_free")}
        d.update(kw)
        return Measurement(**d)


def pose_covariance(ev: MatchEval, sigma_p: float = DEFAULT_SIGMA_P,
                    coupled: bool = True, size_free: tuple = (True, True)) -> np.ndarray:
    """``R_t`` for the fit summarized by ``ev``.

    ``size_free`` flags which of ``(w, l)`` were free at the optimum; a
    size pinned to its bound does not respond to perturbations and is left
    out of the coupled system.  Raises :class:`SingularHessianError` when
    ``|det H|`` of the scaled Hessian is below ``1e-12``.
    """
    if not sigma_p > 0:
        raise ValueError("sigma_p must be positive")
    if ev.point_partials_full is None:
        raise ValueError("evaluation lacks point partials")
    idx = [0, 1, 2]
    if coupled:
        idx += [3 + k for k in range(2) if size_free[k]]
    h = np.asarray(ev.hess[np.ix_(idx, idx)], dtype=float)
    scale = np.abs(h).max()
    if not scale > 0 or abs(np.linalg.det(h / scale)) < _DET_RTOL:
        raise SingularHessianError("Hessian is singular")
    g = ev.point_partials_full[:, idx]
    k = np.einsum("nij,nkj->ik", g, g)
    hinv = np.linalg.inv(h)
    r = (sigma_p**2 * hinv @ k @ hinv.T)[:3, :3]
    return 0.5 * (r + r.T)


def covariance_or_fallback(ev: MatchEval, sigma_p: float = DEFAULT_SIGMA_P,
                           coupled: bool = True, size_free: tuple = (True, True)
                           ) -> tuple[np.ndarray, bool]:
    """``(R_t, degenerate)``; the pessimistic prior replaces a singular fit."""
    try:
        r = pose_covariance(ev, sigma_p, coupled, size_free)
    except SingularHessianError:
        return FALLBACK_COVARIANCE.copy(), True
    if not np.all(np.isfinite(r)) or np.linalg.eigvalsh(r)[0] < -1e-12 * max(1.0, np.abs(r).max()):
        return FALLBACK_COVARIANCE.copy(), True
    return r, False

"""Independent reference computations for the tests.

Nothing here calls the closed-form kernels: responses come from 2D
Gauss-Legendre quadrature over the filter surface as ``value_at`` reports
it, energies from cell midpoints of the rectangle arrangement or from
pairwise overlaps, clusters
from an all-pairs union-find.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(2)


def erf_hp(x: float) -> float:
    with mpmath.workdps(40):
        return float(mpmath.erf(mpmath.mpf(x)))


def _nodes(lo, hi, breaks, step):
    """Two-point Gauss-Legendre nodes on [lo, hi] with sub-intervals <= step,
    never straddling one of ``breaks``."""
    cuts = np.unique(np.concatenate([[lo, hi], [b for b in breaks if lo < b < hi]]))
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(math.ceil((b - a) / step)))
        edges = np.linspace(a, b, k + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        xs.append((mid[:, None] + half[:, None] * _GL_X[None, :]).ravel())
        ws.append((half[:, None] * _GL_W[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def to_local(points_xy, tx, ty, theta):
    c, s = math.cos(theta), math.sin(theta)
    d = np.asarray(points_xy, dtype=float) - np.array([tx, ty])
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


def quad_response(points_xy, sigma, spec, state, reach: float = 7.0, per_sigma: int = 20) -> float:
    """Unnormalized response: integral of (sum of hit Gaussians) x (filter surface)."""
    local = to_local(points_xy, state.tx, state.ty, state.t_theta)
    xb = sorted({r.xmin for r in spec.rects} | {r.xmax for r in spec.rects})
    yb = sorted({r.ymin for r in spec.rects} | {r.ymax for r in spec.rects})
    step = sigma / per_sigma
    total = 0.0
    for u, v in local:
        X, wx = _nodes(u - reach * sigma, u + reach * sigma, xb, step)
        Y, wy = _nodes(v - reach * sigma, v + reach * sigma, yb, step)
        GX, GY = np.meshgrid(X, Y, indexing="ij")
        s = spec.value_at(GX, GY)
        if not np.any(s):
            continue
        dens = np.exp(-((GX - u) ** 2 + (GY - v) ** 2) / (2 * sigma**2)) / (2 * math.pi * sigma**2)
        total += float(np.einsum("i,ij,j->", wx, s * dens, wy))
    return total


def arrangement_energy(spec) -> float:
    """Integral of s^2 summed exactly over the cells cut by all rectangle edges."""
    xb = np.array(sorted({r.xmin for r in spec.rects} | {r.xmax for r in spec.rects}))
    yb = np.array(sorted({r.ymin for r in spec.rects} | {r.ymax for r in spec.rects}))
    xm, ym = 0.5 * (xb[:-1] + xb[1:]), 0.5 * (yb[:-1] + yb[1:])
    s = spec.value_at(*np.meshgrid(xm, ym, indexing="ij"))
    return float(np.sum(s**2 * np.outer(np.diff(xb), np.diff(yb))))


def overlap_energy(spec) -> float:
    """Integral of s^2 as the double sum of height products times pairwise overlap areas."""
    total = 0.0
    for a in spec.rects:
        for b in spec.rects:
            dx = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
            dy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
            if dx > 0 and dy > 0:
                total += a.height * b.height * dx * dy
    return total


def monte_carlo_energy(spec, n: int, seed: int = 0) -> float:
    rects = spec.rects
    x0 = min(r.xmin for r in rects)
    x1 = max(r.xmax for r in rects)
    y0 = min(r.ymin for r in rects)
    y1 = max(r.ymax for r in rects)
    rng = np.random.default_rng(seed)
    acc, done, chunk = 0.0, 0, 1_000_000
    while done < n:
        k = min(chunk, n - done)
        x = rng.uniform(x0, x1, k)
        y = rng.uniform(y0, y1, k)
        acc += float(np.sum(spec.value_at(x, y) ** 2))
        done += k
    return acc / n * (x1 - x0) * (y1 - y0)


def union_find_partition(xy, gap: float) -> set[frozenset]:
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if math.dist(xy[i], xy[j]) <= gap:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def moved_edges_center(tx, ty, theta, l, w, delta):
    """Center and size after shifting the four edge lines of a rectangle."""
    front, rear = l / 2 + delta.dx_f, -l / 2 + delta.dx_r
    right, left = w / 2 + delta.dy_r, -w / 2 + delta.dy_l
    cx, cy = 0.5 * (front + rear), 0.5 * (right + left)
    c, s = math.cos(theta), math.sin(theta)
    return (tx + c * cx - s * cy, ty + s * cx + c * cy, front - rear, right - left)


def central_diff(f, x, h):
    x = np.asarray(x, dtype=float)
    out = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        out.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.array(out)

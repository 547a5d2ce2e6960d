"""Pure numpy match kernel.

Reference implementation and fallback for the compiled ``_kernel`` module;
both share the signature of :func:`match_kernel`.
"""

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 0.3989422804014327


def _unique_bounds(lo, klo, hi, khi):
    pairs = np.concatenate([np.column_stack([lo, klo]), np.column_stack([hi, khi])])
    uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    r = lo.size
    return uniq[:, 0], uniq[:, 1], inv[:r], inv[r:]


def match_kernel(mx, my, tx, ty, theta, sigma, table, want_points=False):
    """Unnormalized response of a rectangle filter to a Gaussian mixture.

    ``table`` has one row per rectangle: ``x0, x1, y0, y1`` bounds in the
    filter frame, their derivatives ``kx0, kx1`` (in l) and ``ky0, ky1``
    (in w), and the height with its first and second theta derivatives.

    Returns ``(value, grad, hess, point_cols)`` where ``grad``/``hess`` are
    taken with respect to ``(tx, ty, t_theta, w, l)``.  ``point_cols`` is
    ``None`` unless ``want_points``; otherwise an ``(n, 6, 2)`` array whose
    rows 0-4 are the ``(tx, ty)`` columns of each point's own Hessian and
    row 5 that point's own ``(tx, ty)`` gradient.
    """
    c, s = np.cos(theta), np.sin(theta)
    dx = np.asarray(mx, dtype=float) - tx
    dy = np.asarray(my, dtype=float) - ty
    u = c * dx + s * dy
    v = -s * dx + c * dy

    table = np.asarray(table, dtype=float)
    xb, xk, ix0, ix1 = _unique_bounds(table[:, 0], table[:, 4], table[:, 1], table[:, 5])
    yb, yk, iy0, iy1 = _unique_bounds(table[:, 2], table[:, 6], table[:, 3], table[:, 7])
    h, dh, ddh = table[:, 8], table[:, 9], table[:, 10]
    inv_s = 1.0 / sigma

    zx = (u[:, None] - xb[None, :]) * inv_s
    px = ndtr(zx)
    nx = _INV_SQRT_2PI * np.exp(-0.5 * zx * zx)
    zy = (v[:, None] - yb[None, :]) * inv_s
    py = ndtr(zy)
    ny = _INV_SQRT_2PI * np.exp(-0.5 * zy * zy)

    # per (point, rect) factors; x bounds move with l, y bounds with w
    z0, z1, n0, n1 = zx[:, ix0], zx[:, ix1], nx[:, ix0], nx[:, ix1]
    k0, k1 = xk[ix0], xk[ix1]
    A = px[:, ix0] - px[:, ix1]
    Au = (n0 - n1) * inv_s
    Auu = (z1 * n1 - z0 * n0) * inv_s**2
    Al = (k1 * n1 - k0 * n0) * inv_s
    Aul = (z0 * k0 * n0 - z1 * k1 * n1) * inv_s**2
    All = (k1 * k1 * z1 * n1 - k0 * k0 * z0 * n0) * inv_s**2

    z0, z1, n0, n1 = zy[:, iy0], zy[:, iy1], ny[:, iy0], ny[:, iy1]
    k0, k1 = yk[iy0], yk[iy1]
    B = py[:, iy0] - py[:, iy1]
    Bv = (n0 - n1) * inv_s
    Bvv = (z1 * n1 - z0 * n0) * inv_s**2
    Bw = (k1 * n1 - k0 * n0) * inv_s
    Bvw = (z0 * k0 * n0 - z1 * k1 * n1) * inv_s**2
    Bww = (k1 * k1 * z1 * n1 - k0 * k0 * z0 * n0) * inv_s**2

    # height-weighted sums over rects, per point
    S0 = (A * B) @ h
    Su, Sv = (Au * B) @ h, (A * Bv) @ h
    Sw, Sl = (A * Bw) @ h, (Al * B) @ h
    Suu, Svv, Suv = (Auu * B) @ h, (A * Bvv) @ h, (Au * Bv) @ h
    Suw, Sul = (Au * Bw) @ h, (Aul * B) @ h
    Svw, Svl = (A * Bvw) @ h, (Al * Bv) @ h
    Sww, Sll, Swl = (A * Bww) @ h, (All * B) @ h, (Al * Bw) @ h
    Q0 = (A * B) @ dh
    Qu, Qv = (Au * B) @ dh, (A * Bv) @ dh
    Qw, Ql = (A * Bw) @ dh, (Al * B) @ dh
    R0 = (A * B) @ ddh

    n = u.size
    # Jacobian of (u, v) in (tx, ty, theta); w and l enter directly
    Ju = np.zeros((n, 5))
    Jv = np.zeros((n, 5))
    Ju[:, 0], Ju[:, 1], Ju[:, 2] = -c, -s, v
    Jv[:, 0], Jv[:, 1], Jv[:, 2] = s, -c, -u

    g = Su[:, None] * Ju + Sv[:, None] * Jv
    g[:, 2] += Q0
    g[:, 3] += Sw
    g[:, 4] += Sl

    def outer(a, b):
        return a[:, :, None] * b[:, None, :]

    def sym(a, b):
        return outer(a, b) + outer(b, a)

    ew = np.zeros(5)
    ew[3] = 1.0
    el = np.zeros(5)
    el[4] = 1.0
    Ew = np.broadcast_to(ew, (n, 5))
    El = np.broadcast_to(el, (n, 5))

    H = (Suu[:, None, None] * outer(Ju, Ju) + Svv[:, None, None] * outer(Jv, Jv)
         + Suv[:, None, None] * sym(Ju, Jv)
         + Suw[:, None, None] * sym(Ju, Ew) + Sul[:, None, None] * sym(Ju, El)
         + Svw[:, None, None] * sym(Jv, Ew) + Svl[:, None, None] * sym(Jv, El))
    H[:, 3, 3] += Sww
    H[:, 4, 4] += Sll
    H[:, 3, 4] += Swl
    H[:, 4, 3] += Swl
    # second derivatives of (u, v) in pose
    t_tx = Su * s + Sv * c
    t_ty = -Su * c + Sv * s
    H[:, 0, 2] += t_tx
    H[:, 2, 0] += t_tx
    H[:, 1, 2] += t_ty
    H[:, 2, 1] += t_ty
    H[:, 2, 2] += -Su * u - Sv * v
    # heights depend on theta through beta
    gq = Qu[:, None] * Ju + Qv[:, None] * Jv
    gq[:, 3] += Qw
    gq[:, 4] += Ql
    H[:, 2, :] += gq
    H[:, :, 2] += gq
    H[:, 2, 2] += R0

    cols = None
    if want_points:
        cols = np.empty((n, 6, 2))
        cols[:, :5] = H[:, :, :2]
        cols[:, 5] = g[:, :2]
    return float(S0.sum()), g.sum(axis=0), H.sum(axis=0), cols


def _cells(lo, klo, hi, khi):
    breaks = sorted(set(zip(lo, klo)) | set(zip(hi, khi)))
    cells = []
    for (a, ka), (b, kb) in zip(breaks, breaks[1:]):
        c = 0.5 * (a + b)
        cells.append((b - a, kb - ka, [x0 < c < x1 for x0, x1 in zip(lo, hi)]))
    return cells


def energy_kernel(table, derivatives=False):
    """Integral of the squared filter over the plane, by cell decomposition.

    Returns ``(e, e_t, e_w, e_l, e_tt, e_tw, e_tl, e_wl)``; the derivative
    entries are zero unless ``derivatives``.  Energy is bilinear in
    ``(w, l)`` for a fixed arrangement, so ``e_ww = e_ll = 0``.
    """
    t = np.asarray(table, dtype=float).tolist()
    cols = list(zip(*t))
    xcells = _cells(cols[0], cols[4], cols[1], cols[5])
    ycells = _cells(cols[2], cols[6], cols[3], cols[7])
    heights = list(zip(cols[8], cols[9], cols[10]))
    e = g_t = g_w = g_l = 0.0
    h_tt = h_tw = h_tl = h_wl = 0.0
    for xlen, xdk, xin in xcells:
        for ylen, ydk, yin in ycells:
            net = dnet = ddnet = 0.0
            for (hh, d1, d2), a, b in zip(heights, xin, yin):
                if a and b:
                    net += hh
                    dnet += d1
                    ddnet += d2
            n2 = net * net
            area = xlen * ylen
            e += n2 * area
            if derivatives:
                g_t += 2 * net * dnet * area
                g_w += n2 * xlen * ydk
                g_l += n2 * xdk * ylen
                h_tt += 2 * (dnet * dnet + net * ddnet) * area
                h_tw += 2 * net * dnet * xlen * ydk
                h_tl += 2 * net * dnet * xdk * ylen
                h_wl += n2 * xdk * ydk
    return e, g_t, g_w, g_l, h_tt, h_tw, h_tl, h_wl

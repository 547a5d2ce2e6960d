# Compiled kernels; match_kernel and energy_kernel mirror vdamf._kernel_py,
# fit_kernel runs the optimizer loop of vdamf.optimize.fit without leaving C.
import numpy as np

from libc.math cimport INFINITY, atan2, copysign, cos, erfc, exp, fabs, fmod, remainder, sin, sqrt
from scipy.linalg.cython_lapack cimport dsyev

cdef enum:
    MAXB = 16
    MAXROWS = 8
    NCOL = 11

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476


cdef int _dedupe(const double* t, int R, int col_lo, int col_hi, int kcol_lo, int kcol_hi,
                 double* vals, double* ks, int* i_lo, int* i_hi) noexcept nogil:
    # unique (bound, slope) pairs; returns the count
    cdef int count = 0
    cdef int r, side, j, col, kcol
    cdef double v, k
    for r in range(R):
        for side in range(2):
            col = col_lo if side == 0 else col_hi
            kcol = kcol_lo if side == 0 else kcol_hi
            v = t[r * NCOL + col]
            k = t[r * NCOL + kcol]
            for j in range(count):
                if vals[j] == v and ks[j] == k:
                    break
            else:
                vals[count] = v
                ks[count] = k
                j = count
                count += 1
            if side == 0:
                i_lo[r] = j
            else:
                i_hi[r] = j
    return count


cdef double _match_core(const double* mxv, const double* myv, Py_ssize_t n,
                        double tx, double ty, double theta, double sigma,
                        const double* tab, int R, double* gout, double* hout,
                        double* colv) noexcept nogil:
    # value returned; gout (5) and hout (5x5, row-major) filled; colv (n x 6 x 2) if not NULL
    cdef double xb[MAXB]
    cdef double xk[MAXB]
    cdef double yb[MAXB]
    cdef double yk[MAXB]
    cdef int ix0[MAXB]
    cdef int ix1[MAXB]
    cdef int iy0[MAXB]
    cdef int iy1[MAXB]
    cdef double h[MAXB]
    cdef double dh[MAXB]
    cdef double ddh[MAXB]
    cdef int K = _dedupe(tab, R, 0, 1, 4, 5, xb, xk, ix0, ix1)
    cdef int L = _dedupe(tab, R, 2, 3, 6, 7, yb, yk, iy0, iy1)
    cdef int r
    for r in range(R):
        h[r] = tab[r * NCOL + 8]
        dh[r] = tab[r * NCOL + 9]
        ddh[r] = tab[r * NCOL + 10]

    cdef double px[MAXB]
    cdef double nx[MAXB]
    cdef double zx[MAXB]
    cdef double py[MAXB]
    cdef double ny[MAXB]
    cdef double zy[MAXB]
    cdef double Ju[3]
    cdef double Jv[3]
    cdef double Hi[5][5]
    cdef double gtot[5]
    cdef double Htot[5][5]
    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef double inv_s = 1.0 / sigma
    cdef double inv_s2 = inv_s * inv_s
    cdef double total = 0.0

    cdef Py_ssize_t i
    cdef int k, a, b, i0, i1
    cdef double dx, dy, u, v, z
    cdef double z0, z1, n0, n1, k0, k1
    cdef double A, Au, Auu, Al, Aul, All, B, Bv, Bvv, Bw, Bvw, Bww
    cdef double hr, dhr, ddhr, AB
    cdef double S0, Su, Sv, Sw, Sl, Suu, Svv, Suv, Suw, Sul, Svw, Svl, Sww, Sll, Swl
    cdef double Q0, Qu, Qv, Qw, Ql, R0
    cdef double gq0, gq1, gq2

    for a in range(5):
        gtot[a] = 0.0
        for b in range(5):
            Htot[a][b] = 0.0

    for i in range(n):
        dx = mxv[i] - tx
        dy = myv[i] - ty
        u = c * dx + s * dy
        v = -s * dx + c * dy
        for k in range(K):
            z = (u - xb[k]) * inv_s
            zx[k] = z
            nx[k] = INV_SQRT_2PI * exp(-0.5 * z * z)
            px[k] = 0.5 * erfc(-z * INV_SQRT2)
        for k in range(L):
            z = (v - yb[k]) * inv_s
            zy[k] = z
            ny[k] = INV_SQRT_2PI * exp(-0.5 * z * z)
            py[k] = 0.5 * erfc(-z * INV_SQRT2)

        S0 = 0.0; Su = 0.0; Sv = 0.0; Sw = 0.0; Sl = 0.0
        Suu = 0.0; Svv = 0.0; Suv = 0.0; Suw = 0.0; Sul = 0.0
        Svw = 0.0; Svl = 0.0; Sww = 0.0; Sll = 0.0; Swl = 0.0
        Q0 = 0.0; Qu = 0.0; Qv = 0.0; Qw = 0.0; Ql = 0.0; R0 = 0.0

        for r in range(R):
            i0 = ix0[r]
            i1 = ix1[r]
            z0 = zx[i0]; z1 = zx[i1]; n0 = nx[i0]; n1 = nx[i1]
            k0 = xk[i0]; k1 = xk[i1]
            A = px[i0] - px[i1]
            Au = (n0 - n1) * inv_s
            Auu = (z1 * n1 - z0 * n0) * inv_s2
            Al = (k1 * n1 - k0 * n0) * inv_s
            Aul = (z0 * k0 * n0 - z1 * k1 * n1) * inv_s2
            All = (k1 * k1 * z1 * n1 - k0 * k0 * z0 * n0) * inv_s2

            i0 = iy0[r]
            i1 = iy1[r]
            z0 = zy[i0]; z1 = zy[i1]; n0 = ny[i0]; n1 = ny[i1]
            k0 = yk[i0]; k1 = yk[i1]
            B = py[i0] - py[i1]
            Bv = (n0 - n1) * inv_s
            Bvv = (z1 * n1 - z0 * n0) * inv_s2
            Bw = (k1 * n1 - k0 * n0) * inv_s
            Bvw = (z0 * k0 * n0 - z1 * k1 * n1) * inv_s2
            Bww = (k1 * k1 * z1 * n1 - k0 * k0 * z0 * n0) * inv_s2

            hr = h[r]
            AB = A * B
            S0 += hr * AB
            Su += hr * Au * B
            Sv += hr * A * Bv
            Sw += hr * A * Bw
            Sl += hr * Al * B
            Suu += hr * Auu * B
            Svv += hr * A * Bvv
            Suv += hr * Au * Bv
            Suw += hr * Au * Bw
            Sul += hr * Aul * B
            Svw += hr * A * Bvw
            Svl += hr * Al * Bv
            Sww += hr * A * Bww
            Sll += hr * All * B
            Swl += hr * Al * Bw
            dhr = dh[r]
            if dhr != 0.0:
                Q0 += dhr * AB
                Qu += dhr * Au * B
                Qv += dhr * A * Bv
                Qw += dhr * A * Bw
                Ql += dhr * Al * B
            ddhr = ddh[r]
            if ddhr != 0.0:
                R0 += ddhr * AB

        Ju[0] = -c; Ju[1] = -s; Ju[2] = v
        Jv[0] = s; Jv[1] = -c; Jv[2] = -u

        total += S0
        for a in range(3):
            gtot[a] += Su * Ju[a] + Sv * Jv[a]
        gtot[2] += Q0
        gtot[3] += Sw
        gtot[4] += Sl

        for a in range(3):
            for b in range(a, 3):
                Hi[a][b] = (Suu * Ju[a] * Ju[b] + Svv * Jv[a] * Jv[b]
                            + Suv * (Ju[a] * Jv[b] + Jv[a] * Ju[b]))
            Hi[a][3] = Suw * Ju[a] + Svw * Jv[a]
            Hi[a][4] = Sul * Ju[a] + Svl * Jv[a]
        Hi[3][3] = Sww
        Hi[4][4] = Sll
        Hi[3][4] = Swl
        Hi[0][2] += Su * s + Sv * c
        Hi[1][2] += -Su * c + Sv * s
        Hi[2][2] += -Su * u - Sv * v
        gq0 = Qu * Ju[0] + Qv * Jv[0]
        gq1 = Qu * Ju[1] + Qv * Jv[1]
        gq2 = Qu * Ju[2] + Qv * Jv[2]
        Hi[0][2] += gq0
        Hi[1][2] += gq1
        Hi[2][2] += 2.0 * gq2 + R0
        Hi[2][3] += Qw
        Hi[2][4] += Ql

        for a in range(5):
            for b in range(a, 5):
                Htot[a][b] += Hi[a][b]
        if colv != NULL:
            for a in range(5):
                colv[i * 12 + a * 2] = Hi[0][a]
                colv[i * 12 + a * 2 + 1] = Hi[0][1] if a == 0 else Hi[1][a]
            colv[i * 12 + 10] = Su * Ju[0] + Sv * Jv[0]
            colv[i * 12 + 11] = Su * Ju[1] + Sv * Jv[1]

    for a in range(5):
        gout[a] = gtot[a]
        for b in range(a, 5):
            hout[a * 5 + b] = Htot[a][b]
            hout[b * 5 + a] = Htot[a][b]
    return total


def match_kernel(mx, my, double tx, double ty, double theta, double sigma, table,
                 bint want_points=False):
    cdef const double[::1] mxv = np.ascontiguousarray(mx, dtype=np.float64)
    cdef const double[::1] myv = np.ascontiguousarray(my, dtype=np.float64)
    cdef const double[:, ::1] tab = np.ascontiguousarray(table, dtype=np.float64)
    cdef Py_ssize_t n = mxv.shape[0]
    cdef int R = tab.shape[0]
    if R > MAXB // 2:
        raise ValueError("too many rectangles")
    if R < 1 or tab.shape[1] != NCOL:
        raise ValueError("filter table needs rows of 11 columns")
    if myv.shape[0] != n:
        raise ValueError("mx and my differ in length")
    grad = np.empty(5)
    hess = np.empty((5, 5))
    cols = np.zeros((n if want_points else 0, 6, 2))
    cdef double[::1] gv = grad
    cdef double[:, ::1] hv = hess
    cdef double[:, :, ::1] cv = cols
    cdef double* cp = &cv[0, 0, 0] if (want_points and n > 0) else NULL
    cdef double total
    if n == 0:
        grad[:] = 0.0
        hess[:] = 0.0
        return 0.0, grad, hess, (cols if want_points else None)
    total = _match_core(&mxv[0], &myv[0], n, tx, ty, theta, sigma, &tab[0, 0], R,
                        &gv[0], &hv[0, 0], cp)
    return total, grad, hess, (cols if want_points else None)


cdef int _sorted_breaks(const double* t, int R, int c_lo, int c_hi, int k_lo, int k_hi,
                        double* vals, double* ks) noexcept nogil:
    cdef int count = 0
    cdef int r, side, j
    cdef double v, k
    cdef bint found
    for r in range(R):
        for side in range(2):
            v = t[r * NCOL + (c_lo if side == 0 else c_hi)]
            k = t[r * NCOL + (k_lo if side == 0 else k_hi)]
            found = False
            for j in range(count):
                if vals[j] == v and ks[j] == k:
                    found = True
                    break
            if not found:
                # insertion sort on (value, slope)
                j = count
                while j > 0 and (vals[j - 1] > v or (vals[j - 1] == v and ks[j - 1] > k)):
                    vals[j] = vals[j - 1]
                    ks[j] = ks[j - 1]
                    j -= 1
                vals[j] = v
                ks[j] = k
                count += 1
    return count


cdef double _energy_core(const double* t, int R, bint derivatives, double* d) noexcept nogil:
    # returns e; d = (g_t, g_w, g_l, h_tt, h_tw, h_tl, h_wl) when derivatives
    cdef double xv[MAXB]
    cdef double xk[MAXB]
    cdef double yv[MAXB]
    cdef double yk[MAXB]
    cdef int K = _sorted_breaks(t, R, 0, 1, 4, 5, xv, xk)
    cdef int L = _sorted_breaks(t, R, 2, 3, 6, 7, yv, yk)
    cdef int i, j, r
    cdef double cx, cy, xlen, ylen, xdk, ydk, net, dnet, ddnet, n2, area
    cdef double e = 0.0, g_t = 0.0, g_w = 0.0, g_l = 0.0
    cdef double h_tt = 0.0, h_tw = 0.0, h_tl = 0.0, h_wl = 0.0
    for i in range(K - 1):
        cx = 0.5 * (xv[i] + xv[i + 1])
        xlen = xv[i + 1] - xv[i]
        xdk = xk[i + 1] - xk[i]
        for j in range(L - 1):
            cy = 0.5 * (yv[j] + yv[j + 1])
            ylen = yv[j + 1] - yv[j]
            ydk = yk[j + 1] - yk[j]
            net = 0.0
            dnet = 0.0
            ddnet = 0.0
            for r in range(R):
                if (t[r * NCOL] < cx < t[r * NCOL + 1]
                        and t[r * NCOL + 2] < cy < t[r * NCOL + 3]):
                    net += t[r * NCOL + 8]
                    dnet += t[r * NCOL + 9]
                    ddnet += t[r * NCOL + 10]
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
    if derivatives:
        d[0] = g_t; d[1] = g_w; d[2] = g_l
        d[3] = h_tt; d[4] = h_tw; d[5] = h_tl; d[6] = h_wl
    return e


def energy_kernel(table, bint derivatives=False):
    """Integral of the squared filter over the plane, by cell decomposition."""
    cdef const double[:, ::1] t = np.ascontiguousarray(table, dtype=np.float64)
    cdef int R = t.shape[0]
    if R > MAXB // 2:
        raise ValueError("too many rectangles")
    if R < 1 or t.shape[1] != NCOL:
        raise ValueError("filter table needs rows of 11 columns")
    cdef double d[7]
    cdef int k
    for k in range(7):
        d[k] = 0.0
    cdef double e = _energy_core(&t[0, 0], R, derivatives, d)
    return e, d[0], d[1], d[2], d[3], d[4], d[5], d[6]


# ---- whole Levenberg-Marquardt fit, same steps as optimize.fit ----

cdef double TWO_PI = 6.283185307179586
cdef double PI = 3.141592653589793


cdef inline double _wrap(double a) noexcept nogil:
    cdef double r = remainder(a, TWO_PI)
    if r <= -PI:
        r += TWO_PI
    return r


cdef int _build_table(double w, double l, double beta, const double* wt, double* tab) noexcept nogil:
    # wt = (surround, interior, edge_gain, pad_l, pad_w, side_depth, end_depth, eps)
    cdef double g = wt[2]
    cdef double sb = sin(beta)
    cdef double cb = cos(beta)
    cdef double pl = wt[3] / 2, pw = wt[4] / 2
    cdef double hl = l / 2, hw = w / 2
    cdef double ds = wt[5], de = wt[6], eps = wt[7]
    cdef double sy = -1.0 if sb > 0 else 1.0
    cdef double ex = 1.0 if cb > 0 else -1.0
    # ties within rounding (beta at an odd multiple of pi/4) go to the side edge
    cdef bint side_dominant = fabs(sb) >= fabs(cb) - 1e-12
    cdef double x0, x1, y0, y1, kx0, kx1, ky0, ky1
    cdef int R = 0
    _row(tab, R, -hl - pl, hl + pl, -hw - pw, hw + pw, -0.5, 0.5, -0.5, 0.5, wt[0], 0.0, 0.0)
    R += 1
    _row(tab, R, -hl, hl, -hw, hw, -0.5, 0.5, -0.5, 0.5, wt[1], 0.0, 0.0)
    R += 1
    if fabs(sb) >= eps:
        if w <= ds:
            y0 = -hw; ky0 = -0.5; y1 = hw; ky1 = 0.5
        elif sy > 0:
            y0 = hw - ds; ky0 = 0.5; y1 = hw; ky1 = 0.5
        else:
            y0 = -hw; ky0 = -0.5; y1 = -hw + ds; ky1 = -0.5
        x0 = -hl
        x1 = hl
        if not side_dominant:
            if ex > 0:
                x1 = hl - de
            else:
                x0 = -hl + de
        if x1 > x0:
            _row(tab, R, x0, x1, y0, y1, -0.5, 0.5, ky0, ky1,
                 g * fabs(sb), g * copysign(1.0, sb) * cb, -g * fabs(sb))
            R += 1
    if fabs(cb) >= eps:
        if l <= de:
            x0 = -hl; kx0 = -0.5; x1 = hl; kx1 = 0.5
        elif ex > 0:
            x0 = hl - de; kx0 = 0.5; x1 = hl; kx1 = 0.5
        else:
            x0 = -hl; kx0 = -0.5; x1 = -hl + de; kx1 = -0.5
        y0 = -hw
        y1 = hw
        if side_dominant:
            if sy > 0:
                y1 = hw - ds
            else:
                y0 = -hw + ds
        if y1 > y0:
            _row(tab, R, x0, x1, y0, y1, kx0, kx1, -0.5, 0.5,
                 g * fabs(cb), -g * copysign(1.0, cb) * sb, -g * fabs(cb))
            R += 1
    return R


cdef inline void _row(double* tab, int r, double a0, double a1, double a2, double a3, double a4,
                      double a5, double a6, double a7, double a8, double a9, double a10) noexcept nogil:
    cdef double* p = tab + r * NCOL
    p[0] = a0; p[1] = a1; p[2] = a2; p[3] = a3; p[4] = a4; p[5] = a5
    p[6] = a6; p[7] = a7; p[8] = a8; p[9] = a9; p[10] = a10


cdef int _eval_norm(const double* mx, const double* my, Py_ssize_t n, double sigma,
                    const double* st, double phi, const double* wt, bint norm_deriv,
                    double* value, double* grad, double* hess,
                    double* colv=NULL, double* pout=NULL, double* alpha=NULL) noexcept nogil:
    # normalized response and derivatives at st = (tx, ty, theta, w, l); -1 on zero energy.
    # With colv (n x 6 x 2 scratch) and pout (n x 5 x 2) also the per-hit partials.
    cdef double tab[MAXROWS * NCOL]
    cdef double d[7]
    cdef double g[5]
    cdef double H[25]
    cdef double de[5]
    cdef double d2e[25]
    cdef double da[5]
    cdef int a, b
    cdef int R = _build_table(st[3], st[4], _wrap(st[2] - phi), wt, tab)
    for a in range(7):
        d[a] = 0.0
    cdef double e = _energy_core(tab, R, norm_deriv, d)
    if not e > 0:
        return -1
    cdef double al = 1.0 / sqrt(e)
    if alpha != NULL:
        alpha[0] = al
    cdef double S = _match_core(mx, my, n, st[0], st[1], st[2], sigma, tab, R, g, H, colv)
    cdef Py_ssize_t i
    value[0] = al * S
    for a in range(5):
        grad[a] = al * g[a]
        for b in range(5):
            hess[a * 5 + b] = al * H[a * 5 + b]
    cdef double e15, e25
    for a in range(5):
        da[a] = 0.0
    if norm_deriv:
        for a in range(5):
            de[a] = 0.0
            for b in range(5):
                d2e[a * 5 + b] = 0.0
        de[2] = d[0]; de[3] = d[1]; de[4] = d[2]
        d2e[2 * 5 + 2] = d[3]
        d2e[2 * 5 + 3] = d[4]; d2e[3 * 5 + 2] = d[4]
        d2e[2 * 5 + 4] = d[5]; d2e[4 * 5 + 2] = d[5]
        d2e[3 * 5 + 4] = d[6]; d2e[4 * 5 + 3] = d[6]
        e15 = e ** -1.5
        e25 = e ** -2.5
        for a in range(5):
            da[a] = -0.5 * e15 * de[a]
        for a in range(5):
            grad[a] += S * da[a]
            for b in range(5):
                hess[a * 5 + b] += (da[a] * g[b] + g[a] * da[b]
                                    + S * (0.75 * e25 * de[a] * de[b] - 0.5 * e15 * d2e[a * 5 + b]))
    for a in range(5):
        for b in range(a + 1, 5):
            hess[a * 5 + b] = 0.5 * (hess[a * 5 + b] + hess[b * 5 + a])
            hess[b * 5 + a] = hess[a * 5 + b]
    if colv != NULL and pout != NULL:
        for i in range(n):
            for a in range(5):
                for b in range(2):
                    pout[i * 10 + a * 2 + b] = (-al * colv[i * 12 + a * 2 + b]
                                                - da[a] * colv[i * 12 + 10 + b])
    return 0


cdef inline bint _small(const double* d, double pos_tol, double ang_tol) noexcept nogil:
    return (fabs(d[0]) < pos_tol and fabs(d[1]) < pos_tol and fabs(d[3]) < pos_tol
            and fabs(d[4]) < pos_tol and fabs(d[2]) < ang_tol)


def fit_kernel(mx, my, double sigma, init, double phi, weights, int max_iterations,
               double lam_init, double lam_up, double lam_down, double pos_tol, double ang_tol,
               double w_lo, double w_hi, double l_lo, double l_hi, int max_retries,
               bint norm_deriv, double pd_floor):
    """Levenberg-Marquardt ascent of the normalized response.

    Returns ``(state, iterations, converged, initial_score, scores, final)``
    with ``state`` as ``(tx, ty, t_theta, w, l)`` and ``final`` the
    evaluation there: ``(value, alpha, grad, hess, point_partials)``.
    """
    cdef const double[::1] mxv = np.ascontiguousarray(mx, dtype=np.float64)
    cdef const double[::1] myv = np.ascontiguousarray(my, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] iv = np.ascontiguousarray(init, dtype=np.float64)
    cdef Py_ssize_t n = mxv.shape[0]
    if n == 0 or myv.shape[0] != n:
        raise ValueError("need matching, non-empty point arrays")
    if wv.shape[0] != 8 or iv.shape[0] != 5:
        raise ValueError("weights need 8 entries and init 5")
    cdef double st[5]
    cdef double cand[5]
    cdef double delta[5]
    cdef double step[5]
    cdef double q[5]
    cdef double gs[5]
    cdef double mu[5]
    cdef double A[25]
    cdef double work[64]
    cdef double cur_v, cand_v, lam = lam_init
    cdef double cur_g[5]
    cdef double cur_h[25]
    cdef double cand_g[5]
    cdef double cand_h[25]
    cdef int a, b, k, it = 0, retry, info
    cdef int five = 5, lwork = 64
    cdef bint converged = False, accepted
    cdef double t
    for a in range(5):
        st[a] = iv[a]
    st[2] = _wrap(st[2])
    st[3] = min(max(st[3], w_lo), w_hi)
    st[4] = min(max(st[4], l_lo), l_hi)
    if _eval_norm(&mxv[0], &myv[0], n, sigma, st, phi, &wv[0], norm_deriv, &cur_v, cur_g, cur_h):
        raise ValueError("filter has zero energy")
    initial = cur_v
    scores = [cur_v]
    while it < max_iterations:
        it += 1
        # scaled system S = D^-1/2 (-H) D^-1/2, eigendecomposed once per iteration
        # one shared scale for (tx, ty) keeps the step rotation-equivariant
        q[0] = 1.0 / sqrt(max(0.5 * fabs(cur_h[0] + cur_h[6]), 1.0))
        q[1] = q[0]
        for a in range(2, 5):
            q[a] = 1.0 / sqrt(max(fabs(cur_h[a * 5 + a]), 1.0))
        for a in range(5):
            for b in range(5):
                A[a * 5 + b] = -0.5 * (cur_h[a * 5 + b] + cur_h[b * 5 + a]) * q[a] * q[b]
        dsyev(b"V", b"L", &five, A, &five, mu, work, &lwork, &info)
        if info != 0:
            raise ValueError("eigendecomposition failed")
        # column-major output: eigenvector k is A[k*5 : k*5+5]
        for k in range(5):
            t = 0.0
            for a in range(5):
                t += A[k * 5 + a] * q[a] * cur_g[a]
            gs[k] = t
        accepted = False
        for retry in range(max_retries):
            while mu[0] + lam <= pd_floor:
                lam *= 2.0
            for a in range(5):
                t = 0.0
                for k in range(5):
                    t += A[k * 5 + a] * gs[k] / (mu[k] + lam)
                delta[a] = q[a] * t
            for a in range(5):
                cand[a] = st[a] + delta[a]
            cand[2] = _wrap(cand[2])
            cand[3] = min(max(cand[3], w_lo), w_hi)
            cand[4] = min(max(cand[4], l_lo), l_hi)
            if _eval_norm(&mxv[0], &myv[0], n, sigma, cand, phi, &wv[0], norm_deriv,
                          &cand_v, cand_g, cand_h):
                raise ValueError("filter has zero energy")
            if cand_v > cur_v:
                for a in range(5):
                    step[a] = cand[a] - st[a]
                step[2] = _wrap(step[2])
                for a in range(5):
                    st[a] = cand[a]
                    cur_g[a] = cand_g[a]
                for a in range(25):
                    cur_h[a] = cand_h[a]
                cur_v = cand_v
                scores.append(cur_v)
                lam = max(lam * lam_down, 1e-12)
                accepted = True
                if _small(step, pos_tol, ang_tol):
                    converged = True
                break
            if _small(delta, pos_tol, ang_tol):
                converged = True
                break
            lam *= lam_up
        if converged or not accepted:
            break
    colv = np.empty((n, 6, 2))
    parts = np.empty((n, 5, 2))
    grad = np.empty(5)
    hess = np.empty((5, 5))
    cdef double[:, :, ::1] cv = colv
    cdef double[:, :, ::1] pv = parts
    cdef double[::1] gv = grad
    cdef double[:, ::1] hv = hess
    cdef double al
    if _eval_norm(&mxv[0], &myv[0], n, sigma, st, phi, &wv[0], norm_deriv,
                  &cur_v, &gv[0], &hv[0, 0], &cv[0, 0, 0], &pv[0, 0, 0], &al):
        raise ValueError("filter has zero energy")
    return ((st[0], st[1], st[2], st[3], st[4]), it, converged, initial, scores,
            (cur_v, al, grad, hess, parts))


def min_area_axis_kernel(mx, my):
    """Orientation in [0, pi/2) of the minimum-area rectangle around the points.

    Monotone-chain hull, then a scan over its edge directions.  Fewer than
    three hull vertices give 0.
    """
    cdef const double[::1] xv = np.ascontiguousarray(mx, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(my, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    if yv.shape[0] != n:
        raise ValueError("x and y differ in length")
    if n < 3:
        return 0.0
    order = np.lexsort((yv, xv))
    cdef const long[::1] ov = order.astype(np.int_)
    hull = np.empty((2 * n, 2))
    cdef double[:, ::1] hv = hull
    cdef Py_ssize_t k = 0, i, j, lower
    cdef double px, py
    for j in range(n):
        i = ov[j]
        px = xv[i]; py = yv[i]
        while k >= 2 and _cross(hv[k - 2, 0], hv[k - 2, 1], hv[k - 1, 0], hv[k - 1, 1], px, py) <= 0:
            k -= 1
        hv[k, 0] = px; hv[k, 1] = py
        k += 1
    lower = k + 1
    for j in range(n - 2, -1, -1):
        i = ov[j]
        px = xv[i]; py = yv[i]
        while k >= lower and _cross(hv[k - 2, 0], hv[k - 2, 1], hv[k - 1, 0], hv[k - 1, 1], px, py) <= 0:
            k -= 1
        hv[k, 0] = px; hv[k, 1] = py
        k += 1
    k -= 1  # last point repeats the first
    if k < 3:
        return 0.0
    angles = np.empty(k)
    cdef double[::1] av = angles
    for i in range(k):
        j = i + 1 if i + 1 < k else 0
        av[i] = fmod(atan2(hv[j, 1] - hv[i, 1], hv[j, 0] - hv[i, 0]), PI / 2)
        if av[i] < 0:
            av[i] += PI / 2
        if av[i] >= PI / 2:
            av[i] -= PI / 2
    angles = np.unique(angles)
    av = angles
    cdef Py_ssize_t m = av.shape[0]
    area = np.empty(m)
    cdef double[::1] arv = area
    cdef double c, s, u, v, ulo, uhi, vlo, vhi
    for j in range(m):
        c = cos(av[j]); s = sin(av[j])
        ulo = vlo = INFINITY
        uhi = vhi = -INFINITY
        for i in range(k):
            u = hv[i, 0] * c + hv[i, 1] * s
            v = -hv[i, 0] * s + hv[i, 1] * c
            ulo = min(ulo, u); uhi = max(uhi, u)
            vlo = min(vlo, v); vhi = max(vhi, v)
        arv[j] = (uhi - ulo) * (vhi - vlo)
    cdef double best = INFINITY
    for j in range(m):
        best = min(best, arv[j])
    for j in range(m):
        if arv[j] < best + 1e-12:
            return av[j]
    return 0.0


cdef inline double _cross(double ox, double oy, double ax, double ay, double bx, double by) noexcept nogil:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)

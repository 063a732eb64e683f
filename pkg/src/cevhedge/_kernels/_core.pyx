# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Reference semantics live in _fallback.py; this
module mirrors those signatures point for point and releases the GIL in
every hot loop so the drivers can thread over path chunks."""

import numpy as np

from libc.math cimport ceil, exp, floor, lgamma, log, log1p, pow, sqrt
from libc.stdint cimport int64_t

from scipy.special.cython_special cimport gammainc, gammaincc

cdef double _W_CUT = 1e-19
cdef double _PROBE_TOL = 1e-16
cdef double _LN_TWO_PI = 1.8378770664093453


cdef inline double _stirlerr(double a) noexcept nogil:
    # lgamma(a+1) - (a+1/2)log(a) + a - log(2pi)/2, nested series; a >= 30
    cdef double ia2 = 1.0 / (a * a)
    return (1.0 / (12.0 * a)) * (1.0 - (ia2 / 30.0) * (
        1.0 - (2.0 * ia2 / 7.0) * (1.0 - 0.75 * ia2)))


cdef inline double _log_pois_like(double a, double y) noexcept nogil:
    # log( y^a e^{-y} / Gamma(a+1) ) without the a*log(y) - y cancellation
    # that loses digits when a ~ y is large; mirrors special.log_poisson_like.
    cdef double d, core
    if a < 30.0:
        return a * log(y) - y - lgamma(a + 1.0)
    d = y / a - 1.0
    if d < 0.5 and d > -0.5:
        core = a * (log1p(d) - d)
    else:
        core = a * log(y / a) + a - y
    return core - _stirlerr(a) - 0.5 * (log(a) + _LN_TWO_PI)


cdef double _ncx2_point(double x, double lam, double df, int mode) noexcept nogil:
    cdef double y, w0, t0, T0, acc, w, t, T, a0, probe
    cdef long j0, W, o, down
    if x <= 0.0:
        return 1.0 if mode == 1 else 0.0
    y = 0.5 * x
    if lam <= 0.0:
        if mode == 0:
            return gammainc(0.5 * df, y)
        if mode == 1:
            return gammaincc(0.5 * df, y)
        return 0.5 * exp(_log_pois_like(0.5 * df - 1.0, y))
    j0 = <long>floor(lam)
    a0 = 0.5 * df + j0
    W = <long>ceil(8.0 * sqrt(lam + 1.0)) + 20
    if mode == 0:
        probe = gammainc(0.5 * df + (j0 - W if j0 - W > 0 else 0), y)
        if probe < _PROBE_TOL:
            return 0.0
    elif mode == 1:
        probe = gammaincc(a0 + W, y)
        if probe < _PROBE_TOL:
            return 0.0
    if j0 > 0:
        w0 = exp(_log_pois_like(<double>j0, lam))
    else:
        w0 = exp(-lam)
    if mode == 0:
        t0 = gammainc(a0, y)
    elif mode == 1:
        t0 = gammaincc(a0, y)
    else:
        t0 = 0.5 * exp(_log_pois_like(a0 - 1.0, y))
    acc = w0 * t0
    if mode != 2:
        T0 = exp(_log_pois_like(a0, y))
    else:
        T0 = 0.0

    w = w0
    t = t0
    T = T0
    for o in range(1, W + 1):
        w = w * lam / (j0 + o)
        if mode == 0:
            t = t - T
            T = T * y / (a0 + o)
        elif mode == 1:
            t = t + T
            T = T * y / (a0 + o)
        else:
            t = t * y / (a0 + o - 1.0)
        acc += w * t
        if w <= _W_CUT:
            break

    if j0 > 0:
        w = w0
        t = t0
        T = T0
        down = j0 if j0 < W else W
        for o in range(1, down + 1):
            w = w * (j0 - o + 1) / lam
            if mode == 0:
                T = T * (a0 - o + 1.0) / y
                t = t + T
            elif mode == 1:
                T = T * (a0 - o + 1.0) / y
                t = t - T
            else:
                t = t * (a0 - o) / y
            acc += w * t
            if w <= _W_CUT:
                break

    if mode == 2:
        return acc if acc > 0.0 else 0.0
    if acc < 0.0:
        return 0.0
    if acc > 1.0:
        return 1.0
    return acc


def ncx2_batch(x, ncp, double df, int mode):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] nv = np.ascontiguousarray(ncp, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _ncx2_point(xv[i], 0.5 * nv[i], df, mode)
    return out


def parabolic_march(dts, sub, sup, dg, f, r, out):
    cdef double[::1] dtv = np.ascontiguousarray(dts, dtype=np.float64)
    cdef double[::1] subv = np.ascontiguousarray(sub, dtype=np.float64)
    cdef double[::1] supv = np.ascontiguousarray(sup, dtype=np.float64)
    cdef double[::1] dgv = np.ascontiguousarray(dg, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[:, ::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[:, ::1] ov = out  # written in place, must be C-contiguous
    cdef Py_ssize_t nt = dtv.shape[0], ns = subv.shape[0]
    scratch_c = np.empty(ns)
    scratch_d = np.empty(ns)
    cdef double[::1] cp = scratch_c, dp = scratch_d
    cdef Py_ssize_t k, i
    cdef double idt, m
    with nogil:
        for k in range(nt - 1, -1, -1):
            idt = 1.0 / dtv[k]
            m = idt + dgv[0] + rv[k, 0]
            cp[0] = -supv[0] / m
            dp[0] = (ov[k + 1, 0] * idt + fv[k, 0]) / m
            for i in range(1, ns):
                m = idt + dgv[i] + rv[k, i] + subv[i] * cp[i - 1]
                cp[i] = -supv[i] / m
                dp[i] = (ov[k + 1, i] * idt + fv[k, i] + subv[i] * dp[i - 1]) / m
            ov[k, ns - 1] = dp[ns - 1]
            for i in range(ns - 2, -1, -1):
                ov[k, i] = dp[i] - cp[i] * ov[k, i + 1]
    return out


cdef inline double _bilin1(double[:, ::1] F, int64_t kt, double tw,
                           double l, double l0, double dl) noexcept nogil:
    cdef Py_ssize_t ns = F.shape[1]
    cdef double pos = (l - l0) / dl
    cdef Py_ssize_t i
    cdef double u, lo, hi
    if pos <= 0.0:
        pos = 0.0
    elif pos >= ns - 1.0:
        pos = ns - 1.0
    i = <Py_ssize_t>pos
    if i > ns - 2:
        i = ns - 2
    u = pos - i
    lo = F[kt, i] + u * (F[kt, i + 1] - F[kt, i])
    hi = F[kt + 1, i] + u * (F[kt + 1, i + 1] - F[kt + 1, i])
    return lo + tw * (hi - lo)


def hedge_rollout(double sigma, double gamma, double eps, double s0, double H0,
                  dts, normals, int strategy_code, double kappa,
                  th_vals, double th_l0, double th_dl, th_kt, th_tw,
                  a_vals, b_vals, double ab_l0, double ab_dl, ab_kt, ab_tw,
                  out_track, out_liq, out_adm, out_xi, out_sT, out_HT,
                  out_absorbed):
    cdef double[::1] dtv = np.ascontiguousarray(dts, dtype=np.float64)
    cdef double[:, ::1] Z = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, ::1] thv = np.ascontiguousarray(th_vals, dtype=np.float64)
    cdef int64_t[::1] thk = np.ascontiguousarray(th_kt, dtype=np.int64)
    cdef double[::1] thw = np.ascontiguousarray(th_tw, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(a_vals, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b_vals, dtype=np.float64)
    cdef int64_t[::1] abk = np.ascontiguousarray(ab_kt, dtype=np.int64)
    cdef double[::1] abw = np.ascontiguousarray(ab_tw, dtype=np.float64)
    cdef double[::1] o_tr = out_track
    cdef double[::1] o_li = out_liq
    cdef double[::1] o_ad = out_adm
    cdef double[::1] o_xi = out_xi
    cdef double[::1] o_sT = out_sT
    cdef double[::1] o_HT = out_HT
    cdef int64_t[::1] o_ab = out_absorbed
    cdef Py_ssize_t npaths = Z.shape[0], nsteps = Z.shape[1]
    cdef Py_ssize_t p, k
    cdef double s, H, track, liq, adm, xi, dt, l, th, h, a_, b_
    cdef double vol, g, mis, s_new
    cdef double rt_eps = 1.0 / sqrt(eps)
    with nogil:
        for p in range(npaths):
            s = s0
            H = H0
            track = 0.0
            liq = 0.0
            adm = 0.0
            xi = 0.0
            o_ab[p] = -1
            for k in range(nsteps):
                dt = dtv[k]
                l = log(s)
                th = _bilin1(thv, thk[k], thw[k], l, th_l0, th_dl)
                if strategy_code == 0:
                    h = 0.0
                elif strategy_code == 1:
                    a_ = _bilin1(av, abk[k], abw[k], l, ab_l0, ab_dl)
                    b_ = _bilin1(bv, abk[k], abw[k], l, ab_l0, ab_dl)
                    h = -(2.0 * a_ * H + b_) / (s * eps)
                elif strategy_code == 2:
                    h = sigma * pow(s, 0.5 + gamma) * (th - H) * rt_eps
                else:
                    h = kappa * (th - H)
                vol = sigma * pow(s, 1.0 + gamma)
                g = vol * vol
                mis = th - H
                track += 0.5 * mis * mis * g * dt
                liq += 0.5 * eps * h * h * s * dt
                adm += H * H * g * dt
                s_new = s + vol * sqrt(dt) * Z[p, k]
                if s_new <= 0.0:
                    s_new = 0.0
                xi += H * (s_new - s)
                H += h * dt
                s = s_new
                if s == 0.0:
                    o_ab[p] = k + 1
                    break
            o_tr[p] = track
            o_li[p] = liq
            o_ad[p] = adm
            o_xi[p] = xi
            o_sT[p] = s
            o_HT[p] = H


def euler_paths(double s0, double sigma, double gamma, dts, normals, out):
    cdef double[::1] dtv = np.ascontiguousarray(dts, dtype=np.float64)
    cdef double[:, ::1] Z = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t npaths = Z.shape[0], nsteps = Z.shape[1]
    cdef Py_ssize_t p, k
    cdef double s
    with nogil:
        for p in range(npaths):
            s = s0
            ov[p, 0] = s
            for k in range(nsteps):
                s = s + sigma * pow(s, 1.0 + gamma) * sqrt(dtv[k]) * Z[p, k]
                if s < 0.0:
                    s = 0.0
                ov[p, k + 1] = s
    return out


def euler_terminal(double s0, double sigma, double gamma, dts, normals):
    cdef double[::1] dtv = np.ascontiguousarray(dts, dtype=np.float64)
    cdef double[:, ::1] Z = np.ascontiguousarray(normals, dtype=np.float64)
    cdef Py_ssize_t npaths = Z.shape[0], nsteps = Z.shape[1]
    out = np.empty(npaths)
    cdef double[::1] ov = out
    cdef Py_ssize_t p, k
    cdef double s
    with nogil:
        for p in range(npaths):
            s = s0
            for k in range(nsteps):
                s = s + sigma * pow(s, 1.0 + gamma) * sqrt(dtv[k]) * Z[p, k]
                if s < 0.0:
                    s = 0.0
            ov[p] = s
    return out

"""Pure numpy reference implementation of the numerical kernels.

The compiled backend (_core.pyx) mirrors these signatures and semantics
exactly; anything ambiguous there is resolved by reading this file. All
kernels take pre-generated inputs (normals, coefficient tables) and no
kernel touches an RNG, so both backends consume identical data.
"""

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gammainc, gammaincc

from ..special import log_poisson_like

# Poisson-weight cutoff for the two-sided series; with weight ratios
# strictly below 1 past the window edges the discarded mass is O(cut).
_W_CUT = 1e-19
# window half-width 8*sqrt(lam+1)+20 keeps the outside Poisson mass
# under 1e-13 for all lam
_W_PAD = 20
_PROBE_TOL = 1e-16
_TINY = 1e-300


def ncx2_batch(x, ncp, df, mode):
    """Noncentral chi-square cdf (mode 0), sf (mode 1) or pdf (mode 2).

    Two-sided Poisson-mixture series started at the weight mode
    j0 = floor(ncp/2): the weights follow w_{j+1} = w_j lam/(j+1), the
    central chi-square cdf/sf terms follow the incomplete-gamma step
    recurrence P(a+1,y) = P(a,y) - y^a e^-y / Gamma(a+1), and the pdf
    terms the ratio g(a+1) = g(a) y/a. Only the two seed values per
    point (term at j0 and its gamma step) call a library function.

    Absolute tolerance 1e-12; truncation is bounded by the Poisson mass
    outside the scan window, < 1e-13. Points whose window-extreme term
    is already below 1e-16 exit early with 0 (cdf/sf deep tail).

    x, ncp: 1-d float arrays of equal length; df scalar > 0.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    ncp = np.ascontiguousarray(ncp, dtype=np.float64)
    n = x.shape[0]
    out = np.empty(n)
    y = 0.5 * x
    lam = 0.5 * ncp

    neg = x <= 0.0
    out[neg] = 1.0 if mode == 1 else 0.0

    central = ~neg & (lam <= 0.0)
    if central.any():
        a = 0.5 * df
        yc = y[central]
        if mode == 0:
            out[central] = gammainc(a, yc)
        elif mode == 1:
            out[central] = gammaincc(a, yc)
        else:
            # chi2 pdf = (1/2) y^{a-1} e^{-y} / Gamma(a); the helper's
            # direct branch covers a - 1 in (-1, 0] as well
            out[central] = 0.5 * np.exp(log_poisson_like(a - 1.0, yc))

    idx = np.flatnonzero(~neg & (lam > 0.0))
    if idx.size == 0:
        return out
    yl = y[idx]
    ll = lam[idx]
    j0 = np.floor(ll).astype(np.int64)
    a0 = 0.5 * df + j0
    W = np.ceil(8.0 * np.sqrt(ll + 1.0)).astype(np.int64) + _W_PAD

    if mode == 0:
        # cdf terms decrease in j: the window max sits at the low edge
        probe = gammainc(0.5 * df + np.maximum(j0 - W, 0), yl)
    elif mode == 1:
        probe = gammaincc(a0 + W, yl)
    else:
        probe = None
    if probe is not None:
        dead = probe < _PROBE_TOL
        out[idx[dead]] = 0.0
        keep = ~dead
        idx, yl, ll, j0, a0, W = idx[keep], yl[keep], ll[keep], j0[keep], a0[keep], W[keep]
        if idx.size == 0:
            return out

    w0 = np.where(j0 > 0,
                  np.exp(log_poisson_like(np.maximum(j0, 1).astype(np.float64), ll)),
                  np.exp(-ll))
    if mode == 0:
        t0 = gammainc(a0, yl)
    elif mode == 1:
        t0 = gammaincc(a0, yl)
    else:
        t0 = 0.5 * np.exp(log_poisson_like(a0 - 1.0, yl))
    acc = w0 * t0
    if mode != 2:
        T0 = np.exp(log_poisson_like(a0, yl))
    else:
        T0 = np.zeros_like(yl)

    # upward scan j0 -> j0+W
    w, t, T = w0.copy(), t0.copy(), T0.copy()
    active = np.ones(idx.shape[0], dtype=bool)
    o = 0
    while active.any():
        o += 1
        act = active & (o <= W)
        if not act.any():
            break
        w = np.where(act, w * ll / (j0 + o), 0.0)
        if mode == 0:
            t = np.where(act, t - T, 0.0)
            T = np.where(act, T * yl / (a0 + o), 0.0)
        elif mode == 1:
            t = np.where(act, t + T, 0.0)
            T = np.where(act, T * yl / (a0 + o), 0.0)
        else:
            t = np.where(act, t * yl / (a0 + o - 1.0), 0.0)
        acc = acc + w * t
        active = act & (w > _W_CUT)

    # downward scan j0 -> max(j0-W, 0)
    w, t, T = w0.copy(), t0.copy(), T0.copy()
    active = j0 > 0
    o = 0
    while active.any():
        o += 1
        act = active & (o <= j0) & (o <= W)
        if not act.any():
            break
        w = np.where(act, w * (j0 - o + 1) / ll, 0.0)
        if mode == 0:
            T = np.where(act, T * (a0 - o + 1.0) / yl, 0.0)
            t = np.where(act, t + T, 0.0)
        elif mode == 1:
            T = np.where(act, T * (a0 - o + 1.0) / yl, 0.0)
            t = np.where(act, t - T, 0.0)
        else:
            t = np.where(act, t * (a0 - o) / yl, 0.0)
        acc = acc + w * t
        active = act & (w > _W_CUT)

    if mode == 2:
        out[idx] = np.maximum(acc, 0.0)
    else:
        out[idx] = np.clip(acc, 0.0, 1.0)
    return out


def parabolic_march(dts, sub, sup, dg, f, r, out):
    """Backward Euler march of 0 = u_t + A u + f - r u from T down to t0.

    A is the tridiagonal spatial operator with off-diagonals sub/sup and
    diagonal -dg (all length ns, boundary rows zeroed by the caller so
    boundary nodes evolve by the reaction terms alone). f and r are
    (nt+1, ns) tables on the time nodes; the step from node k+1 to k is
    implicit in everything at node k:

        (1/dt + dg + r[k]) u[k] - sub u[k-1] - sup u[k+1] = u[k+1]/dt + f[k]

    out is (nt+1, ns) with out[nt] preset to the terminal data.
    The matrix rows are strictly diagonally dominant for r >= 0, so the
    solve is stable and order-preserving (discrete comparison principle).
    """
    nt = dts.shape[0]
    ns = sub.shape[0]
    ab = np.zeros((3, ns))
    for k in range(nt - 1, -1, -1):
        idt = 1.0 / dts[k]
        ab[0, 1:] = -sup[:-1]
        ab[1, :] = idt + dg + r[k]
        ab[2, :-1] = -sub[1:]
        rhs = out[k + 1] * idt + f[k]
        out[k] = solve_banded((1, 1), ab, rhs, check_finite=False)
    return out


def _bilin(F, kt, tw, logs, l0, dl):
    # bilinear in (t, log S); constant extrapolation past the spot window
    ns = F.shape[1]
    pos = np.clip((logs - l0) / dl, 0.0, ns - 1.0)
    i = np.minimum(pos.astype(np.int64), ns - 2)
    u = pos - i
    lo = F[kt, i] + u * (F[kt, i + 1] - F[kt, i])
    hi = F[kt + 1, i] + u * (F[kt + 1, i + 1] - F[kt + 1, i])
    return lo + tw * (hi - lo)


def hedge_rollout(sigma, gamma, eps, s0, H0, dts, normals,
                  strategy_code, kappa,
                  th_vals, th_l0, th_dl, th_kt, th_tw,
                  a_vals, b_vals, ab_l0, ab_dl, ab_kt, ab_tw,
                  out_track, out_liq, out_adm, out_xi, out_sT, out_HT,
                  out_absorbed):
    """Explicit Euler policy rollout along CEV paths.

    Per step, in order: interpolate theta at the left state; compute the
    trading rate h from the strategy (0 zero, 1 optimal feedback from
    the a/b tables, 2 naive relaxation, 3 delta tracking at rate kappa);
    accrue tracking, liquidity and holdings-variation integrals; diffuse
    the spot with the supplied normal; clamp at zero (absorption);
    update xi with the clamped increment; then H += h dt.

    Absorbed paths stop trading and accruing: every integrand carries a
    positive power of S, and h is forced to 0.

    th_kt/th_tw (and ab_kt/ab_tw) are per-step time brackets into the
    theta (a/b) tables, precomputed by the caller; spot lookup is O(1)
    on the uniform log grid. Outputs are per-path accumulator arrays;
    xi excludes the x0 + H0 s0 constant.
    """
    npaths, nsteps = normals.shape
    s = np.full(npaths, float(s0))
    H = np.full(npaths, float(H0))
    alive = np.ones(npaths, dtype=bool)
    track = np.zeros(npaths)
    liq = np.zeros(npaths)
    adm = np.zeros(npaths)
    xi = np.zeros(npaths)
    out_absorbed[:] = -1
    rt_eps = 1.0 / np.sqrt(eps)

    for k in range(nsteps):
        dt = dts[k]
        rdt = np.sqrt(dt)
        logs = np.log(np.maximum(s, _TINY))
        th = _bilin(th_vals, th_kt[k], th_tw[k], logs, th_l0, th_dl)
        if strategy_code == 0:
            h = np.zeros(npaths)
        elif strategy_code == 1:
            av = _bilin(a_vals, ab_kt[k], ab_tw[k], logs, ab_l0, ab_dl)
            bv = _bilin(b_vals, ab_kt[k], ab_tw[k], logs, ab_l0, ab_dl)
            h = -(2.0 * av * H + bv) / (np.maximum(s, _TINY) * eps)
        elif strategy_code == 2:
            h = sigma * s ** (0.5 + gamma) * (th - H) * rt_eps
        else:
            h = kappa * (th - H)
        h = np.where(alive, h, 0.0)

        vol = sigma * s ** (1.0 + gamma)   # 0 on absorbed paths
        g = vol * vol                      # sigma^2 S^{2+2gamma}
        mis = th - H
        track += 0.5 * mis * mis * g * dt
        liq += 0.5 * eps * h * h * s * dt
        adm += H * H * g * dt

        s_new = s + vol * rdt * normals[:, k]
        died = alive & (s_new <= 0.0)
        s_new = np.where(s_new <= 0.0, 0.0, s_new)
        xi += H * (s_new - s)
        H = H + h * dt
        out_absorbed[died] = k + 1
        alive &= s_new > 0.0
        s = s_new

    out_track[:] = track
    out_liq[:] = liq
    out_adm[:] = adm
    out_xi[:] = xi
    out_sT[:] = s
    out_HT[:] = H


def euler_paths(s0, sigma, gamma, dts, normals, out):
    """Euler paths of dS = sigma S^{1+gamma} dW with absorption at 0.

    out is (npaths, nsteps+1); out[:, 0] is set to s0. A path clamped
    to 0 stays there (the diffusion coefficient vanishes).
    """
    npaths, nsteps = normals.shape
    s = np.full(npaths, float(s0))
    out[:, 0] = s
    for k in range(nsteps):
        ds = sigma * s ** (1.0 + gamma) * np.sqrt(dts[k]) * normals[:, k]
        s = np.maximum(s + ds, 0.0)
        out[:, k + 1] = s
    return out


def euler_terminal(s0, sigma, gamma, dts, normals):
    """Terminal spots of euler_paths without storing the paths."""
    npaths, nsteps = normals.shape
    s = np.full(npaths, float(s0))
    for k in range(nsteps):
        ds = sigma * s ** (1.0 + gamma) * np.sqrt(dts[k]) * normals[:, k]
        s = np.maximum(s + ds, 0.0)
    return s

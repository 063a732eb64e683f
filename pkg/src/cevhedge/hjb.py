"""Coefficient system behind the quadratic value surface V = a H^2 + b H + c.

a solves a semilinear equation through a damped fixed-point map: each
sweep freezes the killing rate at the previous iterate and calls the
linear solver. The map is antitone (a larger killing rate shrinks the
solution), so starting from zero the even iterates climb, the odd ones
descend, and the pair brackets the solution; the sup gap between the
envelopes is a computable error certificate. b and c then follow from
single linear solves with a frozen.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ._kernels import parabolic_march
from .errors import ConvergenceError, InvalidInputError, NumericalError
from .grids import Grid2D, bilinear
from .process import ModelParams
from .pricing import PriceSurface

_MAX_ITER_DEFAULT = 50
_TOL_FRACTION = 1e-4      # default tol, as a fraction of sup of the first sweep
_ORDER_SLACK = 1e-10      # envelope-ordering slack, relative to the same sup
_RESIDUAL_TIME_GUARD = 0.02


class CoeffField:
    """One scalar per grid node, read through bilinear-in-(t, log S)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        if not isinstance(grid, Grid2D):
            raise InvalidInputError("grid must be a Grid2D")
        vals = np.ascontiguousarray(values, dtype=np.float64)
        if vals.shape != grid.shape:
            raise InvalidInputError(
                f"values must have shape {grid.shape}, got {vals.shape}")
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals

    def interpolate(self, t, s):
        return bilinear(self.values, self.grid, t, s)


@dataclass(frozen=True)
class SolveReport:
    """Iteration count, envelope gap, residuals, and the two envelopes."""

    iterations: int
    gap: float
    residuals: Dict[str, float]
    lower: CoeffField
    upper: CoeffField
    gap_history: Tuple[float, ...] = ()


def _table(field_like, grid, name):
    """Coerce f(t, S) callables, CoeffFields, or arrays to a node table."""
    nt, ns = grid.shape
    if callable(field_like):
        out = np.empty((nt, ns))
        for k, tk in enumerate(grid.times.nodes):
            row = np.asarray(field_like(float(tk), grid.spots),
                             dtype=np.float64)
            out[k] = np.broadcast_to(row, (ns,))
    elif isinstance(field_like, CoeffField):
        if not field_like.grid.same_mesh(grid):
            raise InvalidInputError(f"{name} lives on a different grid")
        out = field_like.values
    else:
        out = np.asarray(field_like, dtype=np.float64)
        if out.shape != (nt, ns):
            raise InvalidInputError(
                f"{name} table must have shape {(nt, ns)}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{name} must be finite on the grid")
    return np.ascontiguousarray(out, dtype=np.float64)


def _stencil(params, grid):
    """Log-spot stencil bands of the generator 0.5 sigma^2 S^(2+2g) d_SS.

    In l = log S the operator is d (u_ll - u_l) with d = 0.5 sigma^2
    S^(2g); central differences give the three bands below. Both
    off-diagonals must stay nonnegative for the maximum principle,
    which needs dl <= 2.
    """
    dl = grid.log_step()
    d = 0.5 * params.sigma ** 2 * grid.spots ** (2.0 * params.gamma)
    inv2 = 1.0 / (dl * dl)
    invh = 0.5 / dl
    sub = d * (inv2 + invh)
    sup = d * (inv2 - invh)
    diag = 2.0 * d * inv2
    if np.any(sup < 0.0):
        raise NumericalError(
            f"log-spot step {dl:.3g} too coarse for the stencil "
            "(off-diagonal sign flip; needs step <= 2)")
    return sub, sup, diag


def solve_linear_parabolic(source, kill_rate, params, grid):
    """March 0 = du/dt + L u + f - r u backward from u(T, .) = 0.

    Fully implicit first-order stepping; with r >= 0 the linear system
    is an M-matrix, so f >= 0 propagates to u >= 0 (checked nowhere,
    guaranteed by construction). source and kill_rate may be callables
    f(t, spots) -> row, node tables, or CoeffFields.
    """
    if not isinstance(params, ModelParams):
        raise InvalidInputError("params must be ModelParams")
    f = _table(source, grid, "source")
    r = _table(kill_rate, grid, "kill_rate")
    if np.any(r < 0.0):
        raise InvalidInputError("kill_rate must be >= 0 on the grid")
    sub, sup, diag = _stencil(params, grid)
    for band in (sub, sup, diag):
        band[0] = 0.0
        band[-1] = 0.0  # zero-curvature edges: L vanishes on the boundary rows
    out = np.zeros(grid.shape)
    parabolic_march(np.ascontiguousarray(grid.times.dts), sub, sup, diag,
                    f, r, out)
    if not np.all(np.isfinite(out)):
        raise NumericalError("linear solve produced non-finite values")
    return CoeffField(grid, out)


def psi_apply(a_in, params, grid):
    """One sweep of the fixed-point map for a.

    Solves the linear equation with source 0.5 sigma^2 S^(2+2g) and the
    killing rate 2 a_in / (eps S) frozen at the input field.
    """
    if not isinstance(a_in, CoeffField):
        raise InvalidInputError("a_in must be a CoeffField")
    if not a_in.grid.same_mesh(grid):
        raise InvalidInputError("a_in lives on a different grid")
    vals = a_in.values
    sup = float(np.max(np.abs(vals)))
    if float(np.min(vals)) < -1e-12 * max(1.0, sup):
        raise InvalidInputError("a_in must be nonnegative")
    spots = grid.spots
    kill = (2.0 / params.eps) * np.maximum(vals, 0.0) / spots[None, :]
    src = np.broadcast_to(
        0.5 * params.sigma ** 2 * spots ** (2.0 + 2.0 * params.gamma),
        grid.shape)
    return solve_linear_parabolic(src, kill, params, grid)


def solve_a(params, grid, tol=None, max_iter=_MAX_ITER_DEFAULT):
    """Fixed-point iteration for a with two-sided error control.

    Returns (midpoint field, report). Iteration counts are sweeps of
    the map, the first sweep included. Default tol is 1e-4 times the
    sup of the first sweep. Raises ConvergenceError carrying the last
    gap when max_iter sweeps do not close the envelope below tol; a
    tol of exactly 0 is admitted but unreachable (the gap stays
    positive in floats), so it always ends there.
    """
    max_iter = int(max_iter)
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    nt, ns = grid.shape
    lower = CoeffField(grid, np.zeros((nt, ns)))
    upper = psi_apply(lower, params, grid)
    apps = 1
    sup_a1 = float(np.max(upper.values))
    if tol is None:
        tol = _TOL_FRACTION * sup_a1
    else:
        tol = float(tol)
        if tol < 0.0 or not np.isfinite(tol):
            raise InvalidInputError("tol must be >= 0 and finite")
    slack = _ORDER_SLACK * max(sup_a1, 1.0)
    gap = float(np.max(upper.values - lower.values))
    history = [gap]
    cur = upper
    while gap >= tol:
        if apps >= max_iter:
            raise ConvergenceError(
                f"envelope gap {gap:.3e} above tolerance {tol:.3e} "
                f"after {apps} iterations",
                gap=gap, iterations=apps)
        nxt = psi_apply(cur, params, grid)
        apps += 1
        if np.any(nxt.values < lower.values - slack) or \
                np.any(nxt.values > upper.values + slack):
            raise NumericalError(
                "iterate left the envelope bracket; the map lost its "
                "alternating monotonicity (likely a grid or rounding issue)")
        if apps % 2 == 0:
            lower = nxt
        else:
            upper = nxt
        new_gap = float(np.max(upper.values - lower.values))
        if new_gap > gap + slack:
            raise NumericalError("envelope gap increased between iterations")
        gap = new_gap
        history.append(gap)
        cur = nxt
    mid = CoeffField(grid, 0.5 * (lower.values + upper.values))
    rel, raw = _residual_of(mid.values, *_a_equation(mid, params, grid),
                            params, grid)
    report = SolveReport(iterations=apps, gap=gap,
                         residuals={"a": rel, "a_abs": raw},
                         lower=lower, upper=upper,
                         gap_history=tuple(history))
    return mid, report


def _theta_table(theta, grid, name="theta"):
    if isinstance(theta, PriceSurface):
        if not theta.grid.same_mesh(grid):
            raise InvalidInputError(f"{name} lives on a different grid")
        return theta.theta_values
    return _table(theta, grid, name)


def solve_b(a, theta, params, grid):
    """Linear-in-H coefficient: source -sigma^2 S^(2+2g) theta, same
    killing rate as a's equation with a now frozen. For theta >= 0 the
    source is <= 0, so b <= 0 by the maximum principle."""
    if not isinstance(a, CoeffField) or not a.grid.same_mesh(grid):
        raise InvalidInputError("a must be a CoeffField on the same grid")
    th = _theta_table(theta, grid)
    g2 = params.sigma ** 2 * grid.spots ** (2.0 + 2.0 * params.gamma)
    src = -g2[None, :] * th
    kill = (2.0 / params.eps) * np.maximum(a.values, 0.0) / grid.spots[None, :]
    return solve_linear_parabolic(src, kill, params, grid)


def solve_c(a, b, theta, params, grid):
    """H-free coefficient: tracking source 0.5 sigma^2 S^(2+2g) theta^2
    minus the rebate b^2/(2 eps S); no killing term."""
    if not isinstance(a, CoeffField) or not a.grid.same_mesh(grid):
        raise InvalidInputError("a must be a CoeffField on the same grid")
    if not isinstance(b, CoeffField) or not b.grid.same_mesh(grid):
        raise InvalidInputError("b must be a CoeffField on the same grid")
    th = _theta_table(theta, grid)
    g2 = params.sigma ** 2 * grid.spots ** (2.0 + 2.0 * params.gamma)
    src = (0.5 * g2[None, :] * th * th
           - b.values * b.values / (2.0 * params.eps * grid.spots[None, :]))
    kill = np.zeros(grid.shape)
    return solve_linear_parabolic(src, kill, params, grid)


def _require_shared(fields, grid):
    for name, fld in fields:
        if not isinstance(fld, CoeffField):
            raise InvalidInputError(f"{name} must be a CoeffField")
        if not fld.grid.same_mesh(grid):
            raise InvalidInputError(f"{name} lives on a different grid")


def assemble_value(a, b, c, H, s, t):
    """V(H, s, t) = a H^2 + b H + c by interpolated evaluation."""
    grid = a.grid if isinstance(a, CoeffField) else None
    if grid is None:
        raise InvalidInputError("a must be a CoeffField")
    _require_shared((("a", a), ("b", b), ("c", c)), grid)
    av = a.interpolate(t, s)
    bv = b.interpolate(t, s)
    cv = c.interpolate(t, s)
    H = np.asarray(H, dtype=np.float64)
    out = av * H * H + bv * H + cv
    if out.ndim == 0:
        return float(out)
    return out


def optimal_control(a, b, H, s, t, params):
    """Feedback trading rate h = -(2 a H + b)/(s eps)."""
    grid = a.grid if isinstance(a, CoeffField) else None
    if grid is None:
        raise InvalidInputError("a must be a CoeffField")
    _require_shared((("a", a), ("b", b)), grid)
    av = a.interpolate(t, s)
    bv = b.interpolate(t, s)
    H = np.asarray(H, dtype=np.float64)
    s_arr = np.asarray(s, dtype=np.float64)
    out = -(2.0 * av * H + bv) / (s_arr * params.eps)
    if out.ndim == 0:
        return float(out)
    return out


def _interior_l(u, params, grid):
    """Discrete generator applied on interior columns: (nt, ns-2)."""
    sub, sup, diag = _stencil(params, grid)
    return (sub[None, 1:-1] * u[:, :-2]
            - diag[None, 1:-1] * u[:, 1:-1]
            + sup[None, 1:-1] * u[:, 2:])


def _residual_of(u, src, kill, scale, params, grid):
    """Sup defect of du/dt + L u + f - r u at midpoint time levels.

    Midpoint (Crank-Nicolson style) evaluation keeps the measurement
    from being dominated by the first-order bias of the solver's own
    stepping. Rows within _RESIDUAL_TIME_GUARD of the horizon from the
    terminal side are skipped: payoff kinks make the defect there an
    artifact of the data, not the scheme. Returns (relative, absolute)
    sups, relative meaning divided by `scale`.
    """
    nodes = grid.times.nodes
    dts = grid.times.dts
    horizon = nodes[-1] - nodes[0]
    t_mid = 0.5 * (nodes[:-1] + nodes[1:])
    keep = (nodes[-1] - t_mid) >= _RESIDUAL_TIME_GUARD * horizon
    if not np.any(keep):
        raise InvalidInputError("time guard leaves no rows to measure")
    lu = _interior_l(u, params, grid)
    du = (u[1:] - u[:-1]) / dts[:, None]
    res = (du[:, 1:-1]
           + 0.5 * (lu[1:] + lu[:-1])
           + 0.5 * (src[1:] + src[:-1])[:, 1:-1]
           - 0.5 * (kill[1:] + kill[:-1])[:, 1:-1]
           * 0.5 * (u[1:] + u[:-1])[:, 1:-1])
    raw = float(np.max(np.abs(res[keep])))
    return raw / max(scale, 1e-300), raw


def _a_equation(a, params, grid):
    spots = grid.spots
    g2 = params.sigma ** 2 * spots ** (2.0 + 2.0 * params.gamma)
    src = np.broadcast_to(0.5 * g2, grid.shape)
    kill = (2.0 / params.eps) * np.maximum(a.values, 0.0) / spots[None, :]
    scale = float(np.max(0.5 * g2[1:-1]))
    return src, kill, scale


def hjb_residual(a, b, c, theta, params, grid):
    """Midpoint finite-difference defects of the three equations.

    Returns a dict with relative sups under "a", "b", "c" (scaled by
    the sup of each equation's source magnitude over interior spots)
    and the raw sups under "*_abs".
    """
    _require_shared((("a", a), ("b", b), ("c", c)), grid)
    th = _theta_table(theta, grid)
    spots = grid.spots
    g2 = params.sigma ** 2 * spots ** (2.0 + 2.0 * params.gamma)
    src_a, kill, scale_a = _a_equation(a, params, grid)

    src_b = -g2[None, :] * th
    scale_b = float(np.max(np.abs(src_b[:, 1:-1])))

    track = 0.5 * g2[None, :] * th * th
    rebate = b.values * b.values / (2.0 * params.eps * spots[None, :])
    src_c = track - rebate
    scale_c = float(np.max(track[:, 1:-1]) + np.max(rebate[:, 1:-1]))

    zeros = np.zeros(grid.shape)
    ra, ra_abs = _residual_of(a.values, src_a, kill, scale_a, params, grid)
    rb, rb_abs = _residual_of(b.values, src_b, kill, scale_b, params, grid)
    rc, rc_abs = _residual_of(c.values, src_c, zeros, scale_c, params, grid)
    return {"a": ra, "b": rb, "c": rc,
            "a_abs": ra_abs, "b_abs": rb_abs, "c_abs": rc_abs}


def write_fields_csv(a, b, c, target):
    """Deterministic dump of the three fields, time-major rows."""
    grid = a.grid
    _require_shared((("a", a), ("b", b), ("c", c)), grid)
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        fh.write("# cevhedge-csv v1\n")
        fh.write(f"# grid: nt={grid.n_times} ns={grid.n_spots} "
                 f"t0={grid.times.t0:.12g} T={grid.times.T:.12g} "
                 f"s_min={grid.spots[0]:.12g} s_max={grid.spots[-1]:.12g}\n")
        fh.write("t,S,a,b,c\n")
        nodes = grid.times.nodes
        spots = grid.spots
        for k in range(nodes.shape[0]):
            for i in range(spots.shape[0]):
                fh.write(f"{nodes[k]:.12g},{spots[i]:.12g},"
                         f"{a.values[k, i]:.12g},{b.values[k, i]:.12g},"
                         f"{c.values[k, i]:.12g}\n")
    finally:
        if own:
            fh.close()

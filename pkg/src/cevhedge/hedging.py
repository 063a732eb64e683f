"""Monte-Carlo policy engine: run a trading-rate rule along simulated
paths, accumulate tracking and liquidity costs, and report the cost
functional with standard errors.

The per-step discretization is explicit: the rate is frozen at the
step's left state, holdings integrate it, and the spot diffuses with an
exact-variance Euler increment. Absorbed paths stop trading; every cost
integrand carries a positive power of the spot, so they also stop
accruing. The compiled rollout and the Python driver implement the
identical step order.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt
from typing import Callable, Dict, Optional

import numpy as np

from . import rng
from ._kernels import backend_name, hedge_rollout
from ._kernels._fallback import _bilin
from .errors import InvalidInputError, NumericalError
from .grids import Grid2D, time_brackets
from .hjb import CoeffField
from .pricing import OptionSpec, PriceSurface, build_surface, price_european
from .process import ModelParams, TimeGrid

_CHUNK = 8192
_VARIANTS = {"zero": 0, "optimal": 1, "naive": 2, "delta_tracking": 3}

# default hedging surface when the caller does not supply one: spot
# window one octave around s0, graded time refinement toward maturity
_SURFACE_NODES = 200
_SURFACE_STEPS = 200
_SURFACE_RATIO = 8.0


@dataclass(frozen=True)
class StrategySpec:
    """A trading-rate rule h(t, s, H, theta).

    Variants: zero (no trading), optimal (feedback from solved a, b
    fields), naive (relax holdings toward the delta at the local
    diffusion speed over sqrt(eps)), delta_tracking (relax at a fixed
    rate kappa), custom (arbitrary vectorized callable).
    """

    name: str
    code: int
    a: Optional[CoeffField] = None
    b: Optional[CoeffField] = None
    kappa: float = 0.0
    rate_fn: Optional[Callable] = None

    @classmethod
    def zero(cls):
        return cls(name="zero", code=0)

    @classmethod
    def optimal(cls, a, b):
        if not isinstance(a, CoeffField) or not isinstance(b, CoeffField):
            raise InvalidInputError("optimal strategy needs a and b fields")
        if not a.grid.same_mesh(b.grid):
            raise InvalidInputError("a and b must share one grid")
        return cls(name="optimal", code=1, a=a, b=b)

    @classmethod
    def naive(cls):
        return cls(name="naive", code=2)

    @classmethod
    def delta_tracking(cls, kappa):
        kappa = float(kappa)
        if not np.isfinite(kappa) or kappa < 0.0:
            raise InvalidInputError("kappa must be finite and >= 0")
        return cls(name="delta_tracking", code=3, kappa=kappa)

    @classmethod
    def custom(cls, name, rate_fn):
        if not callable(rate_fn):
            raise InvalidInputError("rate_fn must be callable")
        return cls(name=str(name), code=-1, rate_fn=rate_fn)


@dataclass(frozen=True)
class CostReport:
    """Cost functional estimates for one strategy run.

    psi = tracking_term + liquidity_term; psi0 adds the deterministic
    initial-mismatch constant 0.5 (x0 + H0 s0 - q0)^2. terminal_sq_error
    is the direct estimator 0.5 E(G(S_T) - xi_T)^2 of everything but the
    liquidity cost; decomposition_gap is the pathwise-paired difference
    between the direct and decomposed psi0 estimators, zero in the mean
    up to MC noise.
    """

    strategy: str
    n_paths: int
    n_steps: int
    tracking_term: float
    liquidity_term: float
    psi: float
    psi0: float
    terminal_sq_error: float
    decomposition_gap: float
    std_errors: Dict[str, float]
    n_absorbed: int
    seed: int
    n_workers: int

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "tracking_term": self.tracking_term,
            "liquidity_term": self.liquidity_term,
            "psi": self.psi,
            "psi0": self.psi0,
            "terminal_sq_error": self.terminal_sq_error,
            "decomposition_gap": self.decomposition_gap,
            "std_errors": dict(sorted(self.std_errors.items())),
            "n_absorbed": self.n_absorbed,
            "seed": self.seed,
            "n_workers": self.n_workers,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def naive_rate(params, theta_value, H, s):
    """Benchmark rate sigma S^(1/2+gamma) (theta - H) / sqrt(eps)."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0.0):
        raise InvalidInputError("s must be > 0")
    th = np.asarray(theta_value, dtype=np.float64)
    H_arr = np.asarray(H, dtype=np.float64)
    out = (params.sigma * s_arr ** (0.5 + params.gamma) * (th - H_arr)
           / sqrt(params.eps))
    if out.ndim == 0:
        return float(out)
    return out


class _Prepared:
    """Per-run immutable tables and per-step time brackets."""

    __slots__ = ("th_vals", "th_l0", "th_dl", "th_kt", "th_tw",
                 "a_vals", "b_vals", "ab_l0", "ab_dl", "ab_kt", "ab_tw")


def _default_surface(option, params, times, s0):
    sgrid = Grid2D.log_spaced(
        TimeGrid.graded(times.t0, times.T, _SURFACE_STEPS, _SURFACE_RATIO),
        0.5 * s0, 2.0 * s0, _SURFACE_NODES)
    return build_surface(option, params, sgrid)


def _prepare(strategy, params, option, s0, grid, surface):
    if surface is None:
        surface = _default_surface(option, params, grid, s0)
    elif not isinstance(surface, PriceSurface):
        raise InvalidInputError("surface must be a PriceSurface")
    if abs(surface.grid.times.T - grid.T) > 1e-9 * max(1.0, grid.T):
        raise InvalidInputError(
            "surface horizon must match the simulation horizon")

    ts_left = grid.nodes[:-1]
    prep = _Prepared()
    prep.th_vals = surface.theta_values
    prep.th_l0 = float(surface.grid.log_spots[0])
    prep.th_dl = surface.grid.log_step()
    kt, tw = time_brackets(surface.grid.times, ts_left)
    prep.th_kt = np.ascontiguousarray(kt)
    prep.th_tw = np.ascontiguousarray(tw)

    if strategy.code == 1:
        agrid = strategy.a.grid
        prep.a_vals = strategy.a.values
        prep.b_vals = strategy.b.values
        prep.ab_l0 = float(agrid.log_spots[0])
        prep.ab_dl = agrid.log_step()
        akt, atw = time_brackets(agrid.times, ts_left)
        prep.ab_kt = np.ascontiguousarray(akt)
        prep.ab_tw = np.ascontiguousarray(atw)
    else:
        # dummy 2x2 tables keep the kernel signature total
        prep.a_vals = np.zeros((2, 2))
        prep.b_vals = np.zeros((2, 2))
        prep.ab_l0 = 0.0
        prep.ab_dl = 1.0
        prep.ab_kt = np.zeros(ts_left.shape[0], dtype=np.int64)
        prep.ab_tw = np.zeros(ts_left.shape[0])
    return surface, prep


class _Accum:
    """Per-path accumulator block for one run."""

    def __init__(self, n_paths, n_steps):
        self.track = np.empty(n_paths)
        self.liq = np.empty(n_paths)
        self.adm = np.empty(n_paths)
        self.xi = np.empty(n_paths)
        self.sT = np.empty(n_paths)
        self.HT = np.empty(n_paths)
        self.absorbed = np.empty(n_paths, dtype=np.int64)
        self.n_steps = n_steps


def _drive_chunk(strategy, params, s0, H0, dts, ts_left, normals, prep,
                 record=None, first_path=0):
    """Python rollout mirroring the compiled kernel step for step.

    Needed for custom rate callables and for trajectory recording; the
    coded variants take the same path here only on the fallback backend.
    record, when given, is a dict filled with per-step history arrays.
    """
    npaths, nsteps = normals.shape
    eps = params.eps
    s = np.full(npaths, float(s0))
    H = np.full(npaths, float(H0))
    alive = np.ones(npaths, dtype=bool)
    track = np.zeros(npaths)
    liq = np.zeros(npaths)
    adm = np.zeros(npaths)
    xi = np.zeros(npaths)
    absorbed = np.full(npaths, -1, dtype=np.int64)
    rt_eps = 1.0 / sqrt(eps)
    if record is not None:
        record["spots"] = np.empty((npaths, nsteps + 1))
        record["holdings"] = np.empty((npaths, nsteps + 1))
        record["rates"] = np.empty((npaths, nsteps))
        record["theta"] = np.empty((npaths, nsteps))
        record["cum_liq"] = np.empty((npaths, nsteps + 1))
        record["xi"] = np.empty((npaths, nsteps + 1))
        record["spots"][:, 0] = s
        record["holdings"][:, 0] = H
        record["cum_liq"][:, 0] = 0.0
        record["xi"][:, 0] = 0.0

    for k in range(nsteps):
        dt = dts[k]
        rdt = sqrt(dt)
        logs = np.log(np.maximum(s, 1e-300))
        th = _bilin(prep.th_vals, prep.th_kt[k], prep.th_tw[k], logs,
                    prep.th_l0, prep.th_dl)
        if strategy.code == 0:
            h = np.zeros(npaths)
        elif strategy.code == 1:
            av = _bilin(prep.a_vals, prep.ab_kt[k], prep.ab_tw[k], logs,
                        prep.ab_l0, prep.ab_dl)
            bv = _bilin(prep.b_vals, prep.ab_kt[k], prep.ab_tw[k], logs,
                        prep.ab_l0, prep.ab_dl)
            h = -(2.0 * av * H + bv) / (np.maximum(s, 1e-300) * eps)
        elif strategy.code == 2:
            h = params.sigma * s ** (0.5 + params.gamma) * (th - H) * rt_eps
        elif strategy.code == 3:
            h = strategy.kappa * (th - H)
        else:
            h = np.broadcast_to(np.asarray(
                strategy.rate_fn(float(ts_left[k]), s, H, th),
                dtype=np.float64), (npaths,))
            bad = alive & ~np.isfinite(h)
            if np.any(bad):
                p = int(np.argmax(bad))
                raise NumericalError(
                    f"strategy {strategy.name!r} returned a non-finite "
                    f"rate on path {first_path + p} at step {k}")
        h = np.where(alive, h, 0.0)

        vol = params.sigma * s ** (1.0 + params.gamma)
        g = vol * vol
        mis = th - H
        track += 0.5 * mis * mis * g * dt
        liq += 0.5 * eps * h * h * s * dt
        adm += H * H * g * dt
        if record is not None:
            record["rates"][:, k] = h
            record["theta"][:, k] = th

        s_new = s + vol * rdt * normals[:, k]
        died = alive & (s_new <= 0.0)
        s_new = np.where(s_new <= 0.0, 0.0, s_new)
        xi += H * (s_new - s)
        H = H + h * dt
        absorbed[died] = k + 1
        alive &= s_new > 0.0
        s = s_new
        if record is not None:
            record["spots"][:, k + 1] = s
            record["holdings"][:, k + 1] = H
            record["cum_liq"][:, k + 1] = liq
            record["xi"][:, k + 1] = xi

    return track, liq, adm, xi, s, H, absorbed


def _run_rollout(strategy, params, s0, H0, grid, n_paths, seed, prep,
                 threads, chunk, stream=0):
    """Fill an _Accum over all paths, chunked; compiled when possible."""
    dts = np.ascontiguousarray(grid.dts)
    ts_left = grid.nodes[:-1]
    n_steps = dts.shape[0]
    acc = _Accum(n_paths, n_steps)
    use_kernel = strategy.code >= 0
    starts = list(range(0, n_paths, chunk))

    def one(first):
        m = min(chunk, n_paths - first)
        normals = rng.normal_block(seed, first, m, n_steps, stream=stream)
        sl = slice(first, first + m)
        if use_kernel:
            hedge_rollout(params.sigma, params.gamma, params.eps,
                          float(s0), float(H0), dts, normals,
                          strategy.code, strategy.kappa,
                          prep.th_vals, prep.th_l0, prep.th_dl,
                          prep.th_kt, prep.th_tw,
                          prep.a_vals, prep.b_vals,
                          prep.ab_l0, prep.ab_dl, prep.ab_kt, prep.ab_tw,
                          acc.track[sl], acc.liq[sl], acc.adm[sl],
                          acc.xi[sl], acc.sT[sl], acc.HT[sl],
                          acc.absorbed[sl])
        else:
            out = _drive_chunk(strategy, params, s0, H0, dts, ts_left,
                               normals, prep, first_path=first)
            (acc.track[sl], acc.liq[sl], acc.adm[sl], acc.xi[sl],
             acc.sT[sl], acc.HT[sl], acc.absorbed[sl]) = out

    if threads > 1 and use_kernel and backend_name() == "c":
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, starts))
    else:
        for first in starts:
            one(first)
    return acc


def _locate_bad_path(strategy, params, s0, H0, grid, seed, prep, p):
    """Single-path replay to name the first non-finite step."""
    dts = np.ascontiguousarray(grid.dts)
    ts_left = grid.nodes[:-1]
    normals = rng.normal_block(seed, p, 1, dts.shape[0])
    rec = {}
    try:
        _drive_chunk(strategy, params, s0, H0, dts, ts_left, normals,
                     prep, record=rec, first_path=p)
    except NumericalError:
        raise
    for k in range(dts.shape[0]):
        cols = (rec["spots"][0, k + 1], rec["holdings"][0, k + 1],
                rec["rates"][0, k], rec["cum_liq"][0, k + 1],
                rec["xi"][0, k + 1])
        if not all(np.isfinite(v) for v in cols):
            return k
    return dts.shape[0] - 1


def _se(x):
    return float(np.std(x, ddof=1) / sqrt(x.shape[0]))


def simulate_hedge(strategy, params, option, s0, H0, x0, grid, n_paths,
                   seed, *, surface=None, threads=1, chunk=_CHUNK,
                   trace=None):
    """Roll the strategy along n_paths simulated paths on the time grid.

    grid is the TimeGrid of trading dates; its horizon must end at the
    option's maturity. surface defaults to a freshly built price/delta
    surface on a graded 200x200 grid spanning one octave around s0.
    Deterministic for a fixed seed, independent of threads and chunk.
    trace, when given, is a path or file receiving a per-step CSV of
    path 0.
    """
    if not isinstance(strategy, StrategySpec):
        raise InvalidInputError("strategy must be a StrategySpec")
    if not isinstance(params, ModelParams):
        raise InvalidInputError("params must be ModelParams")
    if not isinstance(option, OptionSpec):
        raise InvalidInputError("option must be an OptionSpec")
    if not isinstance(grid, TimeGrid):
        raise InvalidInputError("grid must be a TimeGrid")
    n_paths = int(n_paths)
    if n_paths < 2:
        raise InvalidInputError("n_paths must be >= 2")
    s0 = float(s0)
    if not np.isfinite(s0) or s0 <= 0.0:
        raise InvalidInputError("s0 must be finite and > 0")
    H0 = float(H0)
    x0 = float(x0)
    if not (np.isfinite(H0) and np.isfinite(x0)):
        raise InvalidInputError("H0 and x0 must be finite")
    if abs(grid.T - option.maturity) > 1e-9 * max(1.0, option.maturity):
        raise InvalidInputError(
            f"time grid ends at {grid.T:g}, option matures at "
            f"{option.maturity:g}")
    threads = max(int(threads), 1)
    chunk = max(int(chunk), 1)

    surface, prep = _prepare(strategy, params, option, s0, grid, surface)
    acc = _run_rollout(strategy, params, s0, H0, grid, n_paths, seed,
                       prep, threads, chunk)

    finite = _finite_mask(acc)
    if not np.all(finite):
        p = int(np.argmax(~finite))
        k = _locate_bad_path(strategy, params, s0, H0, grid, seed, prep, p)
        raise NumericalError(
            f"non-finite accumulator on path {p} at step {k} "
            f"(strategy {strategy.name!r})")

    if trace is not None:
        _write_trace(trace, strategy, params, s0, H0, x0, grid, seed, prep)

    report, _ = _report_from(acc, strategy, params, option, s0, H0, x0,
                             grid, n_paths, seed, threads)
    return report


def _write_trace(target, strategy, params, s0, H0, x0, grid, seed, prep):
    """CSV of path 0: state entering each step, then the terminal row."""
    dts = np.ascontiguousarray(grid.dts)
    ts_left = grid.nodes[:-1]
    normals = rng.normal_block(seed, 0, 1, dts.shape[0])
    rec = {}
    _drive_chunk(strategy, params, s0, H0, dts, ts_left, normals, prep,
                 record=rec, first_path=0)
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", encoding="utf-8") if own else target
    base = x0 + H0 * s0
    try:
        fh.write("# cevhedge-csv v1\n")
        fh.write("t,S,H,theta,h,cum_liq_cost,xi\n")
        n = dts.shape[0]
        for k in range(n):
            fh.write(f"{grid.nodes[k]:.12g},{rec['spots'][0, k]:.12g},"
                     f"{rec['holdings'][0, k]:.12g},"
                     f"{rec['theta'][0, k]:.12g},"
                     f"{rec['rates'][0, k]:.12g},"
                     f"{rec['cum_liq'][0, k]:.12g},"
                     f"{base + rec['xi'][0, k]:.12g}\n")
        fh.write(f"{grid.nodes[n]:.12g},{rec['spots'][0, n]:.12g},"
                 f"{rec['holdings'][0, n]:.12g},0,0,"
                 f"{rec['cum_liq'][0, n]:.12g},"
                 f"{base + rec['xi'][0, n]:.12g}\n")
    finally:
        if own:
            fh.close()


def rollout_trajectories(strategy, params, option, s0, H0, grid, n_paths,
                         seed, *, surface=None):
    """Full path/holdings/rate histories through the Python driver.

    Returns (spots (n, K+1), holdings (n, K+1), rates (n, K)). Meant
    for diagnostics and plots, so path counts should stay modest.
    """
    if not isinstance(grid, TimeGrid):
        raise InvalidInputError("grid must be a TimeGrid")
    n_paths = int(n_paths)
    if n_paths < 1:
        raise InvalidInputError("n_paths must be >= 1")
    surface, prep = _prepare(strategy, params, option, float(s0), grid,
                             surface)
    rec = {}
    normals = rng.normal_block(seed, 0, n_paths, grid.n_steps)
    _drive_chunk(strategy, params, float(s0), float(H0),
                 np.ascontiguousarray(grid.dts), grid.nodes[:-1], normals,
                 prep, record=rec)
    return rec["spots"], rec["holdings"], rec["rates"]


def admissibility_diagnostics(paths, holdings, rates, params, dts):
    """MC reading of the admissibility functionals of a finished rollout.

    Estimates E int H^2 sigma^2 S^(2+2g) dt (the quadratic-variation
    size of the holdings account) and E int (eps/2) h^2 S dt (the total
    liquidity outlay), left-Riemann over the supplied trajectories.
    The stability flag compares the two half-sample estimates; it goes
    False when they disagree beyond 3 combined standard errors, the
    telltale of a diverging integrand.
    """
    paths = np.asarray(paths, dtype=np.float64)
    holdings = np.asarray(holdings, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    dts = np.asarray(dts, dtype=np.float64)
    n, kp1 = paths.shape
    k = kp1 - 1
    if holdings.shape != (n, kp1) or rates.shape != (n, k) \
            or dts.shape != (k,):
        raise InvalidInputError("trajectory shapes disagree")
    if n < 2:
        raise InvalidInputError("need at least two paths")

    s = paths[:, :-1]
    H = holdings[:, :-1]
    g = params.sigma ** 2 * s ** (2.0 + 2.0 * params.gamma)
    qv_p = np.sum(H * H * g * dts[None, :], axis=1)
    liq_p = np.sum(0.5 * params.eps * rates * rates * s * dts[None, :],
                   axis=1)

    half = n // 2
    report = {
        "holdings_variation": float(np.mean(qv_p)),
        "holdings_variation_se": _se(qv_p),
        "liquidity": float(np.mean(liq_p)),
        "liquidity_se": _se(liq_p),
        "n_paths": n,
    }
    stable = True
    for arr in (qv_p, liq_p):
        a, b = arr[:half], arr[half:]
        tol = 3.0 * (_se(a) + _se(b))
        if abs(float(np.mean(a)) - float(np.mean(b))) > tol:
            stable = False
    report["stable"] = stable
    return report


def compare_strategies(strategies, params, option, s0, H0, x0, grid,
                       n_paths, seed, *, surface=None, resimulate=False,
                       threads=1, chunk=_CHUNK):
    """Run several strategies and rank them on shared randomness.

    With resimulate=False (the default) every strategy sees the same
    paths (common random numbers), so the paired standard error of a
    psi difference is far tighter than the individual errors. Returns
    rows sorted by psi ascending: each has the CostReport, the psi gap
    to the best row, and the paired SE of that gap.
    """
    specs = list(strategies)
    if not specs:
        raise InvalidInputError("need at least one strategy")
    for spec in specs:
        if not isinstance(spec, StrategySpec):
            raise InvalidInputError("strategies must be StrategySpec")
    if surface is None:
        surface = _default_surface(option, params, grid, float(s0))

    reports = []
    psis = []
    for i, spec in enumerate(specs):
        stream_seed = seed
        stream = 0
        if resimulate:
            stream = i
        _, prep = _prepare(spec, params, option, float(s0), grid, surface)
        # inline rollout so the pathwise psi vector is available for
        # paired statistics
        dts = np.ascontiguousarray(grid.dts)
        acc = _AccumRunner(spec, params, float(s0), float(H0), grid,
                           int(n_paths), stream_seed, prep, threads,
                           chunk, stream)
        reports.append(_report_from(acc, spec, params, option, float(s0),
                                    float(H0), float(x0), grid,
                                    int(n_paths), seed, threads))
        psis.append(acc.track + acc.liq)

    order = sorted(range(len(specs)), key=lambda i: reports[i].psi)
    best = order[0]
    rows = []
    for i in order:
        diff = psis[i] - psis[best]
        rows.append({
            "name": reports[i].strategy,
            "report": reports[i],
            "psi": reports[i].psi,
            "psi_se": reports[i].std_errors["psi"],
            "excess_vs_best": float(np.mean(diff)),
            "excess_se": _se(diff) if i != best else 0.0,
        })
    return rows


def _AccumRunner(spec, params, s0, H0, grid, n_paths, seed, prep,
                 threads, chunk, stream):
    if stream == 0:
        return _run_rollout(spec, params, s0, H0, grid, n_paths, seed,
                            prep, threads, chunk)
    # independent randomness per strategy: shift the path-block stream
    acc = _Accum(n_paths, grid.n_steps)
    dts = np.ascontiguousarray(grid.dts)
    ts_left = grid.nodes[:-1]
    starts = list(range(0, n_paths, chunk))
    for first in starts:
        m = min(chunk, n_paths - first)
        normals = rng.normal_block(seed, first, m, grid.n_steps,
                                   stream=stream)
        sl = slice(first, first + m)
        if spec.code >= 0:
            hedge_rollout(params.sigma, params.gamma, params.eps, s0, H0,
                          dts, normals, spec.code, spec.kappa,
                          prep.th_vals, prep.th_l0, prep.th_dl,
                          prep.th_kt, prep.th_tw,
                          prep.a_vals, prep.b_vals, prep.ab_l0,
                          prep.ab_dl, prep.ab_kt, prep.ab_tw,
                          acc.track[sl], acc.liq[sl], acc.adm[sl],
                          acc.xi[sl], acc.sT[sl], acc.HT[sl],
                          acc.absorbed[sl])
        else:
            out = _drive_chunk(spec, params, s0, H0, dts, ts_left,
                               normals, prep, first_path=first)
            (acc.track[sl], acc.liq[sl], acc.adm[sl], acc.xi[sl],
             acc.sT[sl], acc.HT[sl], acc.absorbed[sl]) = out
    return acc


def _report_from(acc, spec, params, option, s0, H0, x0, grid, n_paths,
                 seed, threads):
    finite = (np.isfinite(acc.track) & np.isfinite(acc.liq)
              & np.isfinite(acc.xi) & np.isfinite(acc.sT)
              & np.isfinite(acc.HT))
    if not np.all(finite):
        p = int(np.argmax(~finite))
        raise NumericalError(
            f"non-finite accumulator on path {p} (strategy {spec.name!r})")
    q0 = price_european(option, params, grid.t0, s0)
    const = 0.5 * (x0 + H0 * s0 - q0) ** 2
    payoff = option.payoff_values(acc.sT)
    xi_T = x0 + H0 * s0 + acc.xi
    terminal_p = 0.5 * (payoff - xi_T) ** 2
    psi_p = acc.track + acc.liq
    gap_p = terminal_p - const - acc.track
    return CostReport(
        strategy=spec.name,
        n_paths=n_paths,
        n_steps=acc.n_steps,
        tracking_term=float(np.mean(acc.track)),
        liquidity_term=float(np.mean(acc.liq)),
        psi=float(np.mean(psi_p)),
        psi0=const + float(np.mean(psi_p)),
        terminal_sq_error=float(np.mean(terminal_p)),
        decomposition_gap=float(np.mean(gap_p)),
        std_errors={
            "tracking_term": _se(acc.track),
            "liquidity_term": _se(acc.liq),
            "psi": _se(psi_p),
            "psi0": _se(psi_p),
            "terminal_sq_error": _se(terminal_p),
            "decomposition_gap": _se(gap_p),
        },
        n_absorbed=int(np.sum(acc.absorbed >= 0)),
        seed=int(seed),
        n_workers=threads,
    )

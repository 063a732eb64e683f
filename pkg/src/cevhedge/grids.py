"""Space-time grids and the bilinear interpolation shared by the pricing
and PDE-solver modules. Interpolation is bilinear in (t, log S), which
preserves positivity of the tables it reads."""

from math import log

import numpy as np

from .errors import InvalidInputError
from .process import TimeGrid

# spot nodes count as log-uniform when their log steps agree to this
# relative tolerance; the solvers and the O(1) interpolation require it
_LOG_UNIFORM_RTOL = 1e-9


class Grid2D:
    """Tensor grid: TimeGrid x strictly increasing positive spot nodes.

    s_min must be strictly positive: the killing rate 2a/(eps S) and the
    feedback rate -V_H/(S eps) both diverge at the origin, so the PDE
    domain excludes it. boundary_policy names the far-field closure of
    the spatial operator; only "zero-curvature" (vanishing second
    derivative in S at both edges, which makes L vanish there since L
    has no first-order term) is implemented.
    """

    __slots__ = ("times", "spots", "boundary_policy", "_log_spots")

    def __init__(self, times, spots, boundary_policy="zero-curvature"):
        if not isinstance(times, TimeGrid):
            raise InvalidInputError("times must be a TimeGrid")
        spots = np.ascontiguousarray(spots, dtype=np.float64)
        if spots.ndim != 1 or spots.shape[0] < 3:
            raise InvalidInputError("need at least three spot nodes")
        if spots[0] <= 0.0:
            raise InvalidInputError("s_min must be strictly positive")
        if not np.all(np.diff(spots) > 0.0):
            raise InvalidInputError("spot nodes must be strictly increasing")
        if boundary_policy != "zero-curvature":
            raise InvalidInputError(
                f"unknown boundary policy {boundary_policy!r}")
        spots.setflags(write=False)
        self.times = times
        self.spots = spots
        self.boundary_policy = boundary_policy
        ls = np.log(spots)
        ls.setflags(write=False)
        self._log_spots = ls

    @classmethod
    def log_spaced(cls, times, s_min, s_max, n_spots,
                   boundary_policy="zero-curvature"):
        if not (0.0 < s_min < s_max):
            raise InvalidInputError("need 0 < s_min < s_max")
        n = int(n_spots)
        if n < 3:
            raise InvalidInputError("n_spots must be >= 3")
        spots = np.exp(np.linspace(log(s_min), log(s_max), n))
        spots[0] = s_min
        spots[-1] = s_max
        return cls(times, spots, boundary_policy)

    @property
    def n_times(self):
        return self.times.nodes.shape[0]

    @property
    def n_spots(self):
        return self.spots.shape[0]

    @property
    def shape(self):
        return (self.n_times, self.n_spots)

    @property
    def log_spots(self):
        return self._log_spots

    @property
    def is_log_uniform(self):
        ls = self._log_spots
        steps = np.diff(ls)
        ref = (ls[-1] - ls[0]) / (ls.shape[0] - 1)
        return bool(np.max(np.abs(steps - ref)) <= _LOG_UNIFORM_RTOL * abs(ref))

    def log_step(self):
        """Uniform log-spot step; raises if the nodes are not log-uniform."""
        if not self.is_log_uniform:
            raise InvalidInputError(
                "spot nodes must be log-uniform for this operation "
                "(build the grid with Grid2D.log_spaced)")
        ls = self._log_spots
        return float((ls[-1] - ls[0]) / (ls.shape[0] - 1))

    def same_mesh(self, other):
        return (self is other) or (
            np.array_equal(self.times.nodes, other.times.nodes)
            and np.array_equal(self.spots, other.spots))

    def __repr__(self):
        return (f"Grid2D({self.n_times}x{self.n_spots}, "
                f"t in [{self.times.t0:g}, {self.times.T:g}], "
                f"S in [{self.spots[0]:g}, {self.spots[-1]:g}])")


def time_brackets(times, ts):
    """Bracket times into grid intervals: returns (k, w) with
    t ~ (1-w) nodes[k] + w nodes[k+1], clipped to the grid span."""
    nodes = times.nodes
    ts = np.asarray(ts, dtype=np.float64)
    k = np.clip(np.searchsorted(nodes, ts, side="right") - 1,
                0, nodes.shape[0] - 2).astype(np.int64)
    w = np.clip((ts - nodes[k]) / (nodes[k + 1] - nodes[k]), 0.0, 1.0)
    return k, w


def bilinear(values, grid, t, s, clamp=False):
    """Bilinear-in-(t, log S) read of a (n_times, n_spots) node table.

    clamp=False raises on queries outside the grid; clamp=True clips to
    the edges (constant extrapolation), which is the convention the
    Monte-Carlo rollout uses for paths leaving the spot window.
    Scalars in, scalar out; arrays broadcast.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    s_arr = np.asarray(s, dtype=np.float64)
    scalar = t_arr.ndim == 0 and s_arr.ndim == 0
    t_b, s_b = np.broadcast_arrays(np.atleast_1d(t_arr), np.atleast_1d(s_arr))

    nodes = grid.times.nodes
    spots = grid.spots
    if not clamp:
        t_slack = 1e-12 * max(nodes[-1] - nodes[0], 1.0)
        if np.any(t_b < nodes[0] - t_slack) or np.any(t_b > nodes[-1] + t_slack):
            raise InvalidInputError(
                f"t outside the grid span [{nodes[0]:g}, {nodes[-1]:g}]")
        s_slack = 1e-12 * spots[-1]
        if np.any(s_b < spots[0] - s_slack) or np.any(s_b > spots[-1] + s_slack):
            raise InvalidInputError(
                f"s outside the grid window [{spots[0]:g}, {spots[-1]:g}]")

    kt, tw = time_brackets(grid.times, t_b)
    ls = grid.log_spots
    dl = grid.log_step()
    ns = spots.shape[0]
    pos = np.clip((np.log(np.maximum(s_b, spots[0] * 1e-12)) - ls[0]) / dl,
                  0.0, ns - 1.0)
    i = np.minimum(pos.astype(np.int64), ns - 2)
    u = pos - i
    lo = values[kt, i] + u * (values[kt, i + 1] - values[kt, i])
    hi = values[kt + 1, i] + u * (values[kt + 1, i + 1] - values[kt + 1, i])
    out = lo + tw * (hi - lo)
    if scalar:
        return float(out[0])
    return out

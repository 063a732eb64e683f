"""Small numerics helpers shared by the kernels and the process module."""

import numpy as np
from scipy.special import gammaln

_LN_TWO_PI = 1.8378770664093453

# Stirling series switchover; below this the direct lgamma form has no
# large-magnitude cancellation to worry about
_STIRL_MIN = 30.0


def stirling_error(a):
    """lgamma(a+1) - (a ln a - a + 0.5 ln(2 pi a)) by its asymptotic
    series; callers guarantee a >= 30, where the truncation is < 1e-16."""
    inv = 1.0 / a
    inv2 = inv * inv
    return inv / 12.0 * (1.0 - inv2 / 30.0 * (1.0 - inv2 * 2.0 / 7.0
                                              * (1.0 - inv2 * 3.0 / 4.0)))


def log_poisson_like(a, y):
    """log( y^a e^-y / Gamma(a+1) ) for real a > 0, y > 0, without the
    catastrophic cancellation of the naive a ln y - y - lgamma(a+1) when
    both a and y are large and close (the regime of every near-the-money
    short-maturity evaluation).

    Rearranged through Stirling as

        [a ln(y/a) + a - y] - stirlerr(a) - 0.5 ln(2 pi a)

    with the bracket computed from log1p when y/a is near 1. Vectorized;
    scalars in, scalar out.
    """
    a_arr = np.asarray(a, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    a_b, y_b = np.broadcast_arrays(a_arr, y_arr)
    scalar = a_b.ndim == 0
    a_f = np.atleast_1d(a_b).astype(np.float64)
    y_f = np.atleast_1d(y_b).astype(np.float64)

    out = np.empty(a_f.shape)
    small = a_f < _STIRL_MIN
    if small.any():
        out[small] = a_f[small] * np.log(y_f[small]) - y_f[small] \
            - gammaln(a_f[small] + 1.0)
    big = ~small
    if big.any():
        ab = a_f[big]
        yb = y_f[big]
        delta = yb / ab - 1.0
        near = np.abs(delta) < 0.5
        core = np.where(near,
                        ab * (np.log1p(np.where(near, delta, 0.0)) - delta),
                        ab * np.log(yb / ab) + ab - yb)
        out[big] = core - stirling_error(ab) - 0.5 * (np.log(ab) + _LN_TWO_PI)
    if scalar:
        return float(out[0])
    return out

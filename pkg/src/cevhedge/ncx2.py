"""Noncentral chi-square distribution: cdf/sf/pdf by a two-sided
Poisson-mixture series (see _kernels._fallback.ncx2_batch for the
recurrences) and raw moments by the MGF derivative recurrence.

Evaluation tolerance is absolute 1e-12 on cdf/sf, and relative to the
series peak for the pdf; the scan window is capped at 1e6 terms and a
noncentrality too large for the cap raises NumericalError.
"""

from dataclasses import dataclass
from math import factorial, isfinite, sqrt, ceil

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericalError

_ITER_CAP = 1_000_000


def _validate(df, ncp):
    if not (isfinite(df) and df > 0.0):
        raise InvalidInputError(f"df must be positive and finite, got {df}")
    if not (isfinite(ncp) and ncp >= 0.0):
        raise InvalidInputError(f"ncp must be nonnegative and finite, got {ncp}")
    # window size 8 sqrt(lam+1)+20 must fit the iteration budget
    if ceil(8.0 * sqrt(0.5 * ncp + 1.0)) + 20 > _ITER_CAP:
        raise NumericalError(
            f"ncp = {ncp} needs a series window beyond the {_ITER_CAP}-term budget")


def _eval(x, df, ncp, mode):
    _validate(df, ncp)
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).ravel()
    out = _kernels.ncx2_batch(flat, np.full(flat.shape[0], float(ncp)), float(df), mode)
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape)


@dataclass(frozen=True)
class NoncentralChiSq:
    """Noncentral chi-square law with df degrees of freedom (real, > 0)
    and noncentrality ncp (>= 0)."""

    df: float
    ncp: float

    def __post_init__(self):
        _validate(self.df, self.ncp)

    @property
    def mean(self):
        return self.df + self.ncp

    @property
    def variance(self):
        return 2.0 * self.df + 4.0 * self.ncp

    def cdf(self, x):
        return _eval(x, self.df, self.ncp, 0)

    def sf(self, x):
        return _eval(x, self.df, self.ncp, 1)

    def pdf(self, x):
        return _eval(x, self.df, self.ncp, 2)

    def moment(self, order):
        return ncx2_moment(self, order)


def ncx2_cdf(dist: NoncentralChiSq, x):
    return _eval(x, dist.df, dist.ncp, 0)


def ncx2_sf(dist: NoncentralChiSq, x):
    return _eval(x, dist.df, dist.ncp, 1)


def ncx2_pdf(dist: NoncentralChiSq, x):
    return _eval(x, dist.df, dist.ncp, 2)


def raw_moments(df, ncp, k_max):
    """Raw moments E[X^n] for n = 0..k_max from the MGF derivative
    recurrence

        m_n = 2^{n-1} (n-1)! (df + n ncp)
              + sum_{j=1}^{n-1} (n-1)!/(n-j)! 2^{j-1} (df + j ncp) m_{n-j}
    """
    mu = [1.0]
    for n in range(1, k_max + 1):
        tot = 2.0 ** (n - 1) * factorial(n - 1) * (df + n * ncp)
        for j in range(1, n):
            tot += (factorial(n - 1) / factorial(n - j)) * 2.0 ** (j - 1) \
                * (df + j * ncp) * mu[n - j]
        mu.append(tot)
    return mu


def ncx2_moment(dist: NoncentralChiSq, order):
    """Raw moment E[X^order].

    Integer orders are exact (MGF recurrence). A fractional order p in
    (k, k+1) returns the log-convexity interpolation bound
    m_k^{1-f} m_{k+1}^f with f = p - k, which is an upper bound on the
    true moment, and is what callers needing fractional orders get.
    """
    if order < 0:
        raise InvalidInputError(f"moment order must be nonnegative, got {order}")
    k = int(order)
    if order == k:
        return raw_moments(dist.df, dist.ncp, k)[k]
    f = order - k
    mu = raw_moments(dist.df, dist.ncp, k + 1)
    return mu[k] ** (1.0 - f) * mu[k + 1] ** f

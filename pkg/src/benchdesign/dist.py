"""Central and noncentral Student-t distribution functions.

The CDFs come from :mod:`benchdesign.kernels` (compiled when available).
Quantiles are found by bracketing, bisection and an Illinois-style
secant refinement.
"""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from functools import lru_cache

from scipy.special import ndtri

from . import kernels
from .errors import DomainError

XTOL = 1e-8
FTOL = 1e-13
_BISECT_WIDTH = 1e-2
_MAXITER = 200


@dataclass(frozen=True)
class DistParams:
    """Degrees of freedom and noncentrality of a t distribution."""

    df: float
    ncp: float = 0.0

    def __post_init__(self):
        _check_df(self.df)
        if not math.isfinite(self.ncp):
            raise DomainError(f"ncp must be finite, got {self.ncp}")

    @classmethod
    def for_paired_test(cls, n: int, d: float) -> "DistParams":
        """Parameters of the paired t statistic for ``n`` pairs and effect ``d``."""
        return cls(df=n - 1, ncp=d * math.sqrt(n))


def _check_df(df):
    if not (isinstance(df, numbers.Real) and math.isfinite(df) and df > 0):
        raise DomainError(f"df must be a positive finite number, got {df!r}")


def _check_p(p):
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie strictly inside (0, 1), got {p!r}")


def t_cdf(x: float, df: float) -> float:
    """P(T <= x) for a central t variable with ``df`` degrees of freedom."""
    _check_df(df)
    if math.isnan(x):
        raise DomainError("x is NaN")
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    return kernels.t_cdf(float(x), float(df))


def nct_cdf(x: float, df: float, ncp: float) -> float:
    """P(T <= x) for a noncentral t variable.

    Evaluated as the Poisson mixture of regularised incomplete beta
    functions, summed outward from the Poisson mode until the geometric
    tail bound on the remaining terms drops below 1e-13.
    """
    _check_df(df)
    if math.isnan(x) or not math.isfinite(ncp):
        raise DomainError(f"invalid arguments x={x!r}, ncp={ncp!r}")
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    if ncp == 0.0:
        return kernels.t_cdf(float(x), float(df))
    return kernels.nct_cdf(float(x), float(df), float(ncp))


def _invert(cdf, p, guess, scale):
    lo = guess - scale
    hi = guess + scale
    flo = cdf(lo) - p
    step = scale
    while flo > 0:
        hi, lo = lo, lo - step
        step *= 2
        flo = cdf(lo) - p
    fhi = cdf(hi) - p
    step = scale
    while fhi < 0:
        lo, flo = hi, fhi
        hi += step
        step *= 2
        fhi = cdf(hi) - p
    if flo == 0:
        return lo
    if fhi == 0:
        return hi

    # coarse bisection, then Illinois regula falsi inside the bracket
    while hi - lo > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        fm = cdf(mid) - p
        if fm == 0:
            return mid
        if fm < 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm

    side = 0
    x = 0.5 * (lo + hi)
    for _ in range(_MAXITER):
        x = hi - fhi * (hi - lo) / (fhi - flo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        fx = cdf(x) - p
        if abs(fx) <= FTOL:
            return x
        if fx < 0:
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo <= XTOL * max(1.0, abs(x)):
            break
    return x


@lru_cache(maxsize=4096)
def t_quantile(p: float, df: float) -> float:
    """Inverse of :func:`t_cdf`."""
    _check_p(p)
    _check_df(df)
    if p == 0.5:
        return 0.0
    guess = float(ndtri(p))
    if df < 3:
        guess *= 1.5
    return _invert(lambda x: kernels.t_cdf(x, float(df)), p, guess, 1.0)


@lru_cache(maxsize=4096)
def nct_quantile(p: float, df: float, ncp: float) -> float:
    """Inverse of :func:`nct_cdf` in its first argument."""
    _check_p(p)
    _check_df(df)
    if not math.isfinite(ncp):
        raise DomainError(f"ncp must be finite, got {ncp!r}")
    if ncp == 0.0:
        return t_quantile(p, df)
    guess = ncp + float(ndtri(p)) * math.sqrt(1.0 + ncp * ncp / (2.0 * df))
    return _invert(lambda x: kernels.nct_cdf(x, float(df), float(ncp)), p, guess, 1.0)

"""Scalar special functions behind the likelihoods and error probabilities.

The Bessel and incomplete-gamma evaluations lean on ``scipy.special``; the
generalized Marcum Q-function of integer order is evaluated here as a
Poisson mixture of regularized gamma tails, which keeps every term positive
and avoids the overflow of the raw Bessel integrand.

The Bessel helpers accept either a scalar or an array and return the same
shape, since the estimators apply them sample-wise.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sp

from .errors import DomainError

__all__ = [
    "bessel_i0",
    "ln_bessel_i0",
    "bessel_ratio",
    "reg_lower_gamma",
    "reg_upper_gamma",
    "marcum_q",
    "marcum_p",
    "double_factorial",
    "ln_double_factorial",
]


def _nonneg(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be finite and >= 0, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Returns ``inf`` once I0 leaves the double range (x > ~713); use
    :func:`ln_bessel_i0` there.
    """
    arr = _nonneg(x)
    with np.errstate(over="ignore"):
        return _out(sp.i0(arr))


def ln_bessel_i0(x):
    """Natural log of I0(x), exact for every finite x >= 0."""
    arr = _nonneg(x)
    return _out(np.log(sp.i0e(arr)) + arr)


def bessel_ratio(x):
    """I1(x) / I0(x), in [0, 1) and strictly increasing."""
    arr = _nonneg(x)
    return _out(sp.i1e(arr) / sp.i0e(arr))


def _check_shape(shape):
    if isinstance(shape, bool) or int(shape) != shape or shape < 1:
        raise DomainError(f"shape must be a positive integer, got {shape!r}")
    return int(shape)


def reg_lower_gamma(shape: int, z: float) -> float:
    """Regularized lower incomplete gamma P(shape, z) for integer shape."""
    s = _check_shape(shape)
    zz = float(_nonneg(z, "z"))
    return float(sp.gammainc(s, zz))


def reg_upper_gamma(shape: int, z: float) -> float:
    """Complement of :func:`reg_lower_gamma`, computed without cancellation."""
    s = _check_shape(shape)
    zz = float(_nonneg(z, "z"))
    return float(sp.gammaincc(s, zz))


def _poisson_window(lam: float):
    """Indices and weights covering the Poisson(lam) mass to below 1e-30."""
    if lam == 0.0:
        return np.zeros(1, dtype=np.int64), np.ones(1)
    half = 13.0 * math.sqrt(lam) + 50.0
    lo = max(0, int(math.floor(lam - half)))
    hi = int(math.ceil(lam + half))
    k = np.arange(lo, hi + 1, dtype=np.int64)
    logw = -lam + k * math.log(lam) - sp.gammaln(k + 1.0)
    return k, np.exp(logw)


def _marcum(order, a, b):
    m = _check_shape(order)
    a = float(_nonneg(a, "a"))
    b = float(_nonneg(b, "b"))
    k, w = _poisson_window(0.5 * a * a)
    z = 0.5 * b * b
    shapes = m + k.astype(float)
    wsum = float(np.sum(w))
    q = float(np.sum(w * sp.gammaincc(shapes, z))) / wsum
    p = float(np.sum(w * sp.gammainc(shapes, z))) / wsum
    # the smaller tail carries the relative precision; the other is its complement
    if q <= p:
        q = min(max(q, 0.0), 1.0)
        return q, 1.0 - q
    p = min(max(p, 0.0), 1.0)
    return 1.0 - p, p


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q-function Q_order(a, b) for integer order >= 1.

    Uses Q_M(a, b) = sum_k Pois(k; a^2/2) * Q(M + k, b^2/2), where Q is the
    regularized upper incomplete gamma function.
    """
    return _marcum(order, a, b)[0]


def marcum_p(order: int, a: float, b: float) -> float:
    """1 - Q_order(a, b), summed directly so small values keep full precision."""
    return _marcum(order, a, b)[1]


def _check_odd(n):
    if isinstance(n, bool) or int(n) != n or n < 1 or int(n) % 2 == 0:
        raise DomainError(f"double factorial needs an odd positive integer, got {n!r}")
    return int(n)


def double_factorial(n: int) -> int:
    """n!! for odd n, as an exact integer."""
    n = _check_odd(n)
    return math.prod(range(n, 0, -2))


def ln_double_factorial(n: int) -> float:
    """ln(n!!) for odd n; (2k-1)!! = (2k)! / (2^k k!)."""
    n = _check_odd(n)
    k = (n + 1) // 2
    return float(sp.gammaln(2 * k + 1) - k * math.log(2.0) - sp.gammaln(k + 1))

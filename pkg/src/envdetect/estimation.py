"""Sample moments and maximum-likelihood amplitude estimators.

Three estimators of the tone amplitude from magnitudes alone:

* ``amp_mle_exact`` solves the likelihood score equation
  ``A = mean(r * I1(r A / s2) / I0(r A / s2))`` numerically;
* ``amp_mle_low`` is the small-argument closed form built from M2 and M4;
* ``amp_mle_high`` is the large-argument closed form built from M.

Every ``*_batch`` variant takes a ``(blocks, n)`` array and works row-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConvergenceError, DomainError
from .signal_model import as_block
from .special import bessel_ratio

__all__ = [
    "Branch",
    "SampleMoments",
    "AmplitudeEstimate",
    "moments",
    "amp_mle_low",
    "amp_mle_high",
    "amp_mle_exact",
    "amp_mle_low_batch",
    "amp_mle_high_batch",
    "amp_mle_exact_batch",
    "exact_mle_residual",
]

MAX_ITER = 500
ZERO_FLOOR = 1e-9


class Branch(str, Enum):
    exact = "exact"
    low_snr = "low_snr"
    high_snr = "high_snr"


@dataclass(frozen=True)
class SampleMoments:
    m1: float
    m2: float
    m4: float
    n: int


@dataclass(frozen=True)
class AmplitudeEstimate:
    a_hat: float
    branch: Branch
    iterations: int = 0


def _check_sigma2(sigma2):
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2!r}")


def moments(block) -> SampleMoments:
    x = as_block(block)
    x2 = x * x
    return SampleMoments(float(x.mean()), float(x2.mean()), float((x2 * x2).mean()), x.size)


def amp_mle_low_batch(m2, m4, sigma2):
    """sqrt(8 s2^2 (M2 - 2 s2)_+ / M4), zero wherever M4 == 0."""
    _check_sigma2(sigma2)
    m2 = np.asarray(m2, dtype=float)
    m4 = np.asarray(m4, dtype=float)
    excess = np.maximum(m2 - 2.0 * sigma2, 0.0)
    safe = np.where(m4 > 0, m4, 1.0)
    return np.where(m4 > 0, np.sqrt(8.0 * sigma2 * sigma2 * excess / safe), 0.0)


def amp_mle_high_batch(m1, sigma2):
    """(M + sqrt(M^2 - 2 s2)_+) / 2, the real part of the larger root."""
    _check_sigma2(sigma2)
    m1 = np.asarray(m1, dtype=float)
    disc = m1 * m1 - 2.0 * sigma2
    return 0.5 * (m1 + np.sqrt(np.maximum(disc, 0.0)))


def amp_mle_low(m: SampleMoments, sigma2: float) -> AmplitudeEstimate:
    return AmplitudeEstimate(float(amp_mle_low_batch(m.m2, m.m4, sigma2)), Branch.low_snr)


def amp_mle_high(m: SampleMoments, sigma2: float) -> AmplitudeEstimate:
    return AmplitudeEstimate(float(amp_mle_high_batch(m.m1, sigma2)), Branch.high_snr)


def _score_parts(t, a):
    """Fixed-point map and its derivative in sigma-normalized units.

    ``t`` holds r / sigma row-wise and ``a`` the current A / sigma per row.
    Returns g(a) = mean(t R(t a)) and g'(a) = mean(t^2 R'(t a)).
    """
    x = t * a[:, None]
    r = bessel_ratio(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = np.where(x > 1e-8, 1.0 - r / x - r * r, 0.5)
    g = np.mean(t * r, axis=1)
    dg = np.mean(t * t * dr, axis=1)
    return g, dg


def amp_mle_exact_batch(mags, sigma2, max_iter: int = MAX_ITER, return_iterations: bool = False):
    """Largest root of the likelihood score equation for every row of ``mags``.

    The map g(a) is concave with slope M2 / (2 sigma2) at the origin, so a
    positive root exists exactly when M2 > 2 sigma2 and is then unique.  It
    is found by Newton's method on g(a) - a started from a = M, which lies
    to the right of the root; concavity makes the iterates decrease
    monotonically onto it without overshoot.
    """
    _check_sigma2(sigma2)
    mags = np.asarray(mags, dtype=float)
    if mags.ndim != 2 or mags.shape[1] == 0:
        raise DomainError("mags must be a (blocks, n) array with n >= 1")
    sigma = math.sqrt(sigma2)
    t = mags / sigma
    rows = t.shape[0]
    a = np.zeros(rows)
    iters = np.zeros(rows, dtype=int)

    m2 = np.mean(t * t, axis=1)
    active = np.flatnonzero(m2 > 2.0)
    a[active] = np.mean(t[active], axis=1)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        ta, aa = t[active], a[active]
        g, dg = _score_parts(ta, aa)
        h = g - aa
        slope = dg - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope < 0, h / slope, 0.0)
        new = aa - step
        # plain fixed-point step if Newton would leave (0, a]
        bad = ~np.isfinite(new) | (new <= 0) | (new > aa)
        new[bad] = g[bad]
        a[active] = new
        iters[active] = it
        done = ((np.abs(h) <= 1e-14 * aa) | (np.abs(new - aa) <= 4e-16 * new)
                | (new < ZERO_FLOOR))
        active = active[~done]
    if active.size:
        last = a[active] * sigma
        raise ConvergenceError(f"{active.size} block(s) did not converge in {max_iter} iterations",
                               last=last)
    a[a < ZERO_FLOOR] = 0.0
    out = a * sigma
    return (out, iters) if return_iterations else out


def amp_mle_exact(block, sigma2: float, max_iter: int = MAX_ITER) -> AmplitudeEstimate:
    x = as_block(block)
    a, it = amp_mle_exact_batch(x[None, :], sigma2, max_iter=max_iter, return_iterations=True)
    return AmplitudeEstimate(float(a[0]), Branch.exact, int(it[0]))


def exact_mle_residual(block, sigma2: float, a_hat: float) -> float:
    """|A - mean(r I1/I0(r A / s2))| at ``a_hat``, in the units of the block."""
    x = as_block(block)
    rhs = float(np.mean(x * bessel_ratio(x * a_hat / sigma2)))
    return abs(a_hat - rhs)

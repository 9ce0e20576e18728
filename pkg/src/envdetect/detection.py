"""Decision rules on a magnitude block.

``energy_detect`` compares M2 with 2 sigma^2, ``amplitude_detect`` compares M
with 1.5 sigma, ``glrt_exact`` evaluates the log generalized likelihood ratio
at the exact amplitude MLE, and ``rid_detect`` fuses the energy and
amplitude verdicts, settling disagreements with precomputed switch points.

Ties at a threshold always go to H0.  The ``*_batch`` functions take a
``(blocks, n)`` array and return boolean arrays where True means H1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError
from .estimation import amp_mle_exact_batch, amp_mle_high_batch, amp_mle_low_batch
from .signal_model import as_block
from .special import ln_bessel_i0

__all__ = [
    "Decision",
    "Case",
    "RidOutcome",
    "RidThresholds",
    "TABLE_THRESHOLDS",
    "ED_THRESHOLD",
    "AD_THRESHOLD",
    "energy_detect",
    "amplitude_detect",
    "glrt_exact",
    "glrt_statistic",
    "classify_case",
    "fuse",
    "rid_detect",
    "default_thresholds",
    "energy_batch",
    "amplitude_batch",
    "glrt_batch",
    "rid_batch",
]

# sigma-normalized: energy threshold in units of sigma^2, amplitude in units of sigma
ED_THRESHOLD = 2.0
AD_THRESHOLD = 1.5


class Decision(IntEnum):
    H0 = 0
    H1 = 1


class Case(str, Enum):
    agree_h1 = "agree_h1"
    agree_h0 = "agree_h0"
    ed1_ad0 = "ed1_ad0"
    ed0_ad1 = "ed0_ad1"


# integer codes used by the batch path, in histogram order
CASE_ORDER = (Case.agree_h1, Case.agree_h0, Case.ed1_ad0, Case.ed0_ad1)


@dataclass(frozen=True)
class RidThresholds:
    """Switch points for the disagreement cases, in units of sigma."""

    n: int
    a_star3: float
    a_star4: float
    m_star4: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        for name in ("a_star3", "a_star4", "m_star4"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive, got {v!r}")

    @classmethod
    def from_switch_points(cls, n: int, a_star3: float, a_star4: float) -> "RidThresholds":
        return cls(n, a_star3, a_star4, a_star4 + 1.0 / (2.0 * a_star4))


@dataclass(frozen=True)
class RidOutcome:
    verdict: Decision
    case_id: Case
    ed_verdict: Decision
    ad_verdict: Decision
    a_hat_used: Optional[float] = None


# printed to three decimals; N -> (A*(3), A*(4), M*(4))
TABLE_THRESHOLDS = {
    1: (1.414, 1.414, 1.768),
    2: (1.202, 1.230, 1.637),
    4: (1.059, 1.093, 1.550),
    8: (0.986, 1.021, 1.511),
    12: (0.961, 0.995, 1.498),
    16: (0.948, 0.984, 1.492),
}


def _sigma(sigma2):
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2!r}")
    return math.sqrt(sigma2)


def _rows(mags):
    mags = np.asarray(mags, dtype=float)
    if mags.ndim != 2 or mags.shape[1] == 0:
        raise DomainError("expected a (blocks, n) array of magnitudes")
    return mags


def energy_batch(mags, sigma2, threshold=ED_THRESHOLD):
    _sigma(sigma2)
    mags = _rows(mags)
    return np.mean(mags * mags, axis=1) > threshold * sigma2


def amplitude_batch(mags, sigma2, threshold=AD_THRESHOLD):
    sigma = _sigma(sigma2)
    mags = _rows(mags)
    return np.mean(mags, axis=1) > threshold * sigma


def glrt_statistic(mags, sigma2, a_hat=None):
    """ln of the generalized likelihood ratio per row, at ``a_hat`` or the exact MLE."""
    _sigma(sigma2)
    mags = _rows(mags)
    if a_hat is None:
        a_hat = amp_mle_exact_batch(mags, sigma2)
    a_hat = np.asarray(a_hat, dtype=float)
    n = mags.shape[1]
    return -n * a_hat ** 2 / (2.0 * sigma2) + np.sum(ln_bessel_i0(mags * a_hat[:, None] / sigma2), axis=1)


def glrt_batch(mags, sigma2):
    return glrt_statistic(mags, sigma2) > 0.0


def energy_detect(block, sigma2: float) -> Decision:
    return Decision(int(energy_batch(as_block(block)[None, :], sigma2)[0]))


def amplitude_detect(block, sigma2: float) -> Decision:
    return Decision(int(amplitude_batch(as_block(block)[None, :], sigma2)[0]))


def glrt_exact(block, sigma2: float) -> Decision:
    return Decision(int(glrt_batch(as_block(block)[None, :], sigma2)[0]))


def classify_case(ed: Decision, ad: Decision) -> Case:
    if ed == ad:
        return Case.agree_h1 if ed == Decision.H1 else Case.agree_h0
    return Case.ed1_ad0 if ed == Decision.H1 else Case.ed0_ad1


def fuse(ed: Decision, ad: Decision, m1: float, m2: float, m4: float, sigma2: float,
         th: RidThresholds) -> RidOutcome:
    """Combine given local verdicts using the block's moments.

    Case (3) tests the low-SNR estimate against ``a_star3``; case (4) tests
    M against ``m_star4``, equivalent to testing the high-SNR estimate
    against ``a_star4``.
    """
    sigma = _sigma(sigma2)
    ed, ad = Decision(ed), Decision(ad)
    case = classify_case(ed, ad)
    if case is Case.agree_h1 or case is Case.agree_h0:
        return RidOutcome(ed, case, ed, ad)
    if case is Case.ed1_ad0:
        a_low = float(amp_mle_low_batch(m2, m4, sigma2))
        verdict = Decision.H1 if a_low >= th.a_star3 * sigma else Decision.H0
        return RidOutcome(verdict, case, ed, ad, a_low)
    a_high = float(amp_mle_high_batch(m1, sigma2))
    verdict = Decision.H1 if m1 >= th.m_star4 * sigma else Decision.H0
    return RidOutcome(verdict, case, ed, ad, a_high)


def rid_detect(block, sigma2: float, th: RidThresholds,
               ed_threshold: float = ED_THRESHOLD, ad_threshold: float = AD_THRESHOLD) -> RidOutcome:
    """Reliability-based fusion of the energy and amplitude detectors.

    ``ed_threshold`` (units of sigma^2) and ``ad_threshold`` (units of sigma)
    default to the equal-prior values; with those, case (4) cannot occur
    because M2 >= M^2 > 2.25 sigma^2 whenever the amplitude detector fires.
    """
    x = as_block(block)
    if th.n != x.size:
        raise DomainError(f"thresholds are for N={th.n} but the block has {x.size} samples")
    sigma = _sigma(sigma2)
    m1 = float(x.mean())
    x2 = x * x
    m2 = float(x2.mean())
    m4 = float((x2 * x2).mean())
    ed = Decision.H1 if m2 > ed_threshold * sigma2 else Decision.H0
    ad = Decision.H1 if m1 > ad_threshold * sigma else Decision.H0
    return fuse(ed, ad, m1, m2, m4, sigma2, th)


def rid_batch(mags, sigma2, th: RidThresholds, ed=None, ad=None):
    """Row-wise RID verdicts and case codes (indices into ``CASE_ORDER``).

    Precomputed ``ed``/``ad`` boolean arrays may be passed to share work with
    the single detectors.
    """
    sigma = _sigma(sigma2)
    mags = _rows(mags)
    if th.n != mags.shape[1]:
        raise DomainError(f"thresholds are for N={th.n} but blocks have {mags.shape[1]} samples")
    x2 = mags * mags
    m1 = mags.mean(axis=1)
    m2 = x2.mean(axis=1)
    if ed is None:
        ed = m2 > ED_THRESHOLD * sigma2
    if ad is None:
        ad = m1 > AD_THRESHOLD * sigma
    verdict = ed & ad
    case = np.where(ed & ad, 0, np.where(~ed & ~ad, 1, np.where(ed, 2, 3)))
    c3 = case == 2
    if np.any(c3):
        m4 = (x2[c3] * x2[c3]).mean(axis=1)
        verdict[c3] = amp_mle_low_batch(m2[c3], m4, sigma2) >= th.a_star3 * sigma
    c4 = case == 3
    if np.any(c4):
        verdict[c4] = m1[c4] >= th.m_star4 * sigma
    return verdict, case


@lru_cache(maxsize=None)
def default_thresholds(n: int) -> RidThresholds:
    """Tabulated switch points for the tabulated N, solver values otherwise."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if n in TABLE_THRESHOLDS:
        return RidThresholds(n, *TABLE_THRESHOLDS[n])
    from .performance import solve_a_star3, solve_a_star4

    a3 = solve_a_star3(n)
    a4, _ = solve_a_star4(n)
    return RidThresholds.from_switch_points(n, a3, a4)

"""Analytic error probabilities and the RID switch-point solvers.

Rates are expressed per block of N magnitudes with the noise variance
normalized out: ``a_over_sigma`` is A / sigma.  The energy detector has
exact closed forms in terms of the regularized gamma and Marcum Q functions.
The amplitude detector uses the corrected small-argument approximation for
its false-alarm rate and the Rician-sum CDF for its misdetection rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError, SolverError
from .signal_model import amplitude_for_snr_db
from .special import marcum_p, reg_upper_gamma
from .sumdist import ErrorFitCoeffs, SumCdf, error_coeffs_for, rayleigh_sum_cdf, rician_sum_cdf

__all__ = [
    "RatePoint",
    "pfa_ed",
    "pmd_ed",
    "pfa_ad",
    "pmd_ad",
    "pe",
    "solve_a_star3",
    "solve_a_star4",
    "analytic_rates",
    "BRACKET",
    "SOLVER_TOL",
]

BRACKET = (0.0, 8.0)
SOLVER_TOL = 1e-6
SOURCES = ("analytic", "semi_analytic", "empirical")


@dataclass(frozen=True)
class RatePoint:
    n: int
    a_over_sigma: float
    pfa: float
    pmd: float
    pe: float
    source: str = "analytic"

    def __post_init__(self):
        for name in ("pfa", "pmd", "pe"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
        if abs(self.pe - 0.5 * (self.pfa + self.pmd)) > 1e-12:
            raise DomainError("pe must equal (pfa + pmd) / 2")
        if self.source not in SOURCES:
            raise DomainError(f"unknown source {self.source!r}")


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_a(a):
    if not (a >= 0 and math.isfinite(a)):
        raise DomainError(f"amplitude must be finite and >= 0, got {a!r}")
    return float(a)


def pfa_ed(n: int) -> float:
    """P(M2 > 2 sigma^2 | H0) = Gamma(N, N) / Gamma(N)."""
    n = _check_n(n)
    return float(reg_upper_gamma(n, float(n)))


def pmd_ed(n: int, a_over_sigma: float) -> float:
    """P(M2 <= 2 sigma^2 | H1) = 1 - Q_N(a sqrt(N), sqrt(2N))."""
    n = _check_n(n)
    a = _check_a(a_over_sigma)
    return float(marcum_p(n, a * math.sqrt(n), math.sqrt(2.0 * n)))


def pfa_ad(n: int, sigma: float = 1.0, coeffs: Optional[ErrorFitCoeffs] = None) -> float:
    """P(M > 1.5 sigma | H0) from the corrected small-argument approximation."""
    n = _check_n(n)
    return 1.0 - float(rayleigh_sum_cdf(1.5 * n * sigma, n, sigma, coeffs))


def pmd_ad(n: int, a: float, sigma: float = 1.0, method: str = "auto") -> SumCdf:
    """P(M <= 1.5 sigma | H1) as a :class:`SumCdf`.

    The ``method`` field says whether the power series or the convolution
    fallback produced the value.
    """
    n = _check_n(n)
    return rician_sum_cdf(1.5 * n * sigma, n, _check_a(a), sigma, method=method)


def pe(pfa: float, pmd: float) -> float:
    """Total error probability with equal priors."""
    for name, v in (("pfa", pfa), ("pmd", pmd)):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
    return 0.5 * (pfa + pmd)


def _bisect(f, lo, hi, tol):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise SolverError(f"no sign change on [{lo}, {hi}]: f = {flo:.3g}, {fhi:.3g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_a_star3(n: int, tol: float = SOLVER_TOL) -> float:
    """A / sigma at which the AD miss rate equals the ED false-alarm rate."""
    n = _check_n(n)
    target = pfa_ed(n)
    return _bisect(lambda a: pmd_ad(n, a).value - target, *BRACKET, tol)


def solve_a_star4(n: int, coeffs: Optional[ErrorFitCoeffs] = None, tol: float = SOLVER_TOL):
    """(A*, M*) where the ED miss rate equals the AD false-alarm rate.

    M* = A* + 1 / (2 A*) maps the amplitude switch point to the equivalent
    threshold on M, all in units of sigma.
    """
    n = _check_n(n)
    if coeffs is None:
        coeffs = error_coeffs_for(n)
    target = pfa_ad(n, 1.0, coeffs)
    a = _bisect(lambda a: pmd_ed(n, a) - target, *BRACKET, tol)
    if a <= 0:
        raise SolverError("switch point collapsed to zero")
    return a, a + 1.0 / (2.0 * a)


def analytic_rates(detector: str, n: int, snr_db: float, coeffs: Optional[ErrorFitCoeffs] = None) -> RatePoint:
    """Analytic operating point for ``"ed"`` or ``"ad"`` at the given SNR.

    AD points whose misdetection rate came from the convolution fallback
    carry ``source="semi_analytic"``.
    """
    n = _check_n(n)
    a = amplitude_for_snr_db(snr_db, 1.0)
    detector = detector.lower()
    if detector == "ed":
        pfa, pmd, source = pfa_ed(n), pmd_ed(n, a), "analytic"
    elif detector == "ad":
        pfa = pfa_ad(n, 1.0, coeffs)
        res = pmd_ad(n, a)
        pmd = res.value
        source = "analytic" if res.method == "series" else "semi_analytic"
    else:
        raise DomainError(f"no analytic rates for detector {detector!r}")
    return RatePoint(n, a, pfa, pmd, pe(pfa, pmd), source)

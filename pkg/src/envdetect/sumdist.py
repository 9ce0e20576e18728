"""Distributions of sums of N i.i.d. Rayleigh or Rician magnitudes.

Three routes are provided:

* the small-argument approximation (SAA) of the Rayleigh-sum CDF with a
  fitted correction term, the closed form used for the amplitude detector's
  false-alarm rate;
* a power series for the Rician-sum CDF obtained by raising the Laplace
  transform of one Rician density to the N-th power;
* a lattice convolution of the single-variable distribution, used to fit
  the SAA correction and as the fallback when the series loses its digits.

All computations are carried out in units of sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy import optimize, special as sp, stats

from .errors import DomainError, FitQualityError, SeriesInstabilityError
from .special import ln_double_factorial

__all__ = [
    "ErrorFitCoeffs",
    "SumCdf",
    "saa_scale",
    "saa_cdf",
    "f_error",
    "rayleigh_sum_cdf",
    "rician_sum_series",
    "rician_sum_cdf",
    "sum_cdf_numeric",
    "fit_error_coeffs",
    "load_error_coeffs",
    "save_error_coeffs",
    "error_coeffs_for",
]

LATTICE_STEP = 2e-3
SERIES_MAX_TERMS = 10_000
SERIES_REL_TOL = 1e-13
# rounding bound: accepted while condition * eps stays below ~1e-10
SERIES_MAX_CONDITION = 1e6
FIT_MAX_RESIDUAL = 5e-3
COEFFS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ErrorFitCoeffs:
    """Coefficients of the SAA correction term for one N (sigma-normalized)."""

    n: int
    a0: float
    a1: float
    a2: float
    residual: float = float("nan")

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a0, self.a1, self.a2)):
            raise DomainError("fit coefficients must be finite")
        if self.a1 <= 0:
            raise DomainError(f"a1 must be positive, got {self.a1!r}")

    @classmethod
    def zero(cls, n: int) -> "ErrorFitCoeffs":
        return cls(n, 0.0, 1.0, 0.0, 0.0)


class SumCdf(NamedTuple):
    """A CDF value plus the route that produced it.

    ``method`` is ``"series"`` or ``"convolution"``; the latter marks a
    series that was too ill-conditioned to use.  ``condition`` is the ratio
    of the absolute-value series to the signed one (nan if not attempted).
    """

    value: float
    method: str
    condition: float = float("nan")


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_pos(v, name):
    if not (v > 0 and math.isfinite(v)):
        raise DomainError(f"{name} must be positive and finite, got {v!r}")
    return float(v)


def _check_nonneg(v, name):
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be finite and >= 0")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


# -- SAA and its correction -------------------------------------------------

def saa_scale(n: int, sigma: float = 1.0) -> float:
    """b = (sigma^2 / N) ((2N - 1)!!)^(1/N)."""
    n = _check_n(n)
    sigma = _check_pos(sigma, "sigma")
    return sigma * sigma / n * math.exp(ln_double_factorial(2 * n - 1) / n)


def saa_cdf(x, n: int, sigma: float = 1.0):
    """Gamma-shaped small-argument approximation to the Rayleigh-sum CDF.

    Matches the exact CDF's leading x^(2N) behaviour at the origin and is
    exact for N = 1.
    """
    n = _check_n(n)
    x = _check_nonneg(x, "x")
    nb = n * saa_scale(n, sigma)
    return _out(sp.gammainc(n, x * x / (2.0 * nb)))


def f_error(x, n: int, sigma: float, coeffs: ErrorFitCoeffs):
    """Fitted correction subtracted from the SAA; zero left of a2 sigma sqrt(N)."""
    n = _check_n(n)
    sigma = _check_pos(sigma, "sigma")
    x = _check_nonneg(x, "x")
    t = np.atleast_1d(x / sigma).astype(float)
    out = np.zeros_like(t)
    if coeffs.a0 == 0.0:
        return _out(out.reshape(np.shape(x)))
    b = saa_scale(n, 1.0)
    s = t - coeffs.a2 * math.sqrt(n)
    m = (s > 0) & (t > 0)
    log_norm = (n * math.log(n) + (n - 1) * math.log(2.0)
                + n * math.log(b / coeffs.a1) + sp.gammaln(n + 1))
    with np.errstate(divide="ignore"):
        ln = (math.log(abs(coeffs.a0)) + np.log(t[m]) + (2 * n - 1) * np.log(s[m])
              - coeffs.a1 * s[m] ** 2 / (2.0 * n * b) - log_norm)
    out[m] = math.copysign(1.0, coeffs.a0) * np.exp(ln)
    return _out(out.reshape(np.shape(x)))


def rayleigh_sum_cdf(x, n: int, sigma: float, coeffs: Optional[ErrorFitCoeffs] = None):
    """Corrected SAA for the CDF of a sum of N Rayleigh(sigma) variables."""
    n = _check_n(n)
    if coeffs is None:
        coeffs = error_coeffs_for(n)
    if coeffs.n != n:
        raise DomainError(f"coefficients are for N={coeffs.n}, not N={n}")
    val = np.asarray(saa_cdf(x, n, sigma)) - np.asarray(f_error(x, n, sigma, coeffs))
    return _out(np.clip(val, 0.0, 1.0))


# -- lattice convolution ----------------------------------------------------

@lru_cache(maxsize=32)
def _lattice(n: int, nu: float, h: float):
    """Right cell edges and CDF of the sum of N Rician(nu, 1) on a lattice.

    One variable is binned into cells of width h with exact cell masses; the
    N-fold sum of the cell midpoints is formed by FFT.
    """
    span = nu + 10.0
    m = int(math.ceil(span / h))
    edges = np.arange(m + 1) * h
    if nu > 0:
        cdf1 = stats.rice.cdf(edges, nu)
    else:
        cdf1 = -np.expm1(-0.5 * edges * edges)
    p = np.diff(cdf1)
    size = 1 << int(math.ceil(math.log2(n * m + 1)))
    mass = np.fft.irfft(np.fft.rfft(p, size) ** n, size)[: n * (m - 1) + 1]
    np.clip(mass, 0.0, None, out=mass)
    # the sum of N midpoints sits at (j + N/2) h; a cell ends half a step later
    right = (np.arange(mass.size) + n / 2.0 + 0.5) * h
    return right, np.cumsum(mass)


def _node_cdf(t, n, nu, h0):
    """Lattice CDF with the step adjusted so that ``t`` is a cell edge."""
    j = round(t / h0 - n / 2.0 - 0.5)
    h = t / (j + n / 2.0 + 0.5)
    _, cdf = _lattice(n, nu, h)
    return float(cdf[j]) if j < cdf.size else 1.0, h


def sum_cdf_numeric(x, n: int, a: float = 0.0, sigma: float = 1.0, h: float = LATTICE_STEP):
    """CDF of the sum of N Rician(a, sigma) magnitudes by lattice convolution.

    For scalar ``x`` the step is nudged so ``x`` falls on a cell edge, where
    the only error left is the O(h^2) midpoint shift (none at all for N=1);
    two such steps are combined by Richardson extrapolation, leaving ~1e-12.
    Arrays are linearly interpolated on one lattice, good to ~1e-7.
    """
    n = _check_n(n)
    sigma = _check_pos(sigma, "sigma")
    nu = round(float(_check_nonneg(a, "a")) / sigma, 15)
    x = _check_nonneg(x, "x")
    t = x / sigma
    if np.ndim(t) == 0 and t / h - n / 2.0 - 0.5 >= 16:
        f1, h1 = _node_cdf(float(t), n, nu, h)
        if n == 1:
            return min(max(f1, 0.0), 1.0)
        f2, h2 = _node_cdf(float(t), n, nu, h / 2)
        val = (h1 * h1 * f2 - h2 * h2 * f1) / (h1 * h1 - h2 * h2)
        return min(max(val, 0.0), 1.0)
    right, cdf = _lattice(n, nu, h)
    val = np.interp(t, np.concatenate(([0.0], right)), np.concatenate(([0.0], cdf)))
    return _out(np.clip(val, 0.0, 1.0))


# -- Rician-sum series ------------------------------------------------------

def _signed_lse(logs, signs):
    """log|sum| and sign of sum(signs * exp(logs))."""
    if logs.size == 0:
        return -math.inf, 0.0
    top = np.max(logs)
    if not math.isfinite(top):
        return -math.inf, 0.0
    s = float(np.sum(signs * np.exp(logs - top)))
    if s == 0.0:
        return -math.inf, 0.0
    return top + math.log(abs(s)), math.copysign(1.0, s)


def _lse(logs):
    if logs.size == 0:
        return -math.inf
    top = np.max(logs)
    if not math.isfinite(top):
        return -math.inf
    return top + math.log(float(np.sum(np.exp(logs - top))))


def rician_sum_series(x: float, n: int, a: float, sigma: float = 1.0,
                      rel_tol: float = SERIES_REL_TOL, max_terms: int = SERIES_MAX_TERMS,
                      max_condition: float = SERIES_MAX_CONDITION):
    """Power-series CDF of a sum of N i.i.d. Rician(a, sigma) magnitudes.

    With t = x / sigma and nu = a / sigma, one Rician density is
    ``t exp(-nu^2/2) sum_k alpha_k t^(2k)`` where alpha_k are the
    coefficients of ``exp(-t^2/2) I0(nu t)``.  Its Laplace transform is
    ``exp(-nu^2/2) s^-2 sum_k beta_k s^(-2k)`` with beta_k = (2k+1)! alpha_k;
    the N-th power of that series has coefficients

        delta_0 = 1,
        delta_i = (1/i) sum_{k=1..i} (N k + k - i) beta_k delta_{i-k},

    and inverting term by term gives

        F(t) = exp(-N nu^2 / 2) sum_i delta_i t^(2(i+N)) / (2(i+N))!.

    Every quantity is held as (log|.|, sign).  A companion series with all
    signs dropped bounds the rounding error; the ratio of the two is the
    returned ``condition``.  Raises :class:`SeriesInstabilityError` when the
    condition exceeds ``max_condition``.

    Returns ``(value, condition, terms_used)``.
    """
    n = _check_n(n)
    sigma = _check_pos(sigma, "sigma")
    t = float(_check_nonneg(x, "x")) / sigma
    nu = float(_check_nonneg(a, "a")) / sigma
    if t == 0.0:
        return 0.0, 1.0, 0
    lt2 = 2.0 * math.log(t)
    prefactor = -0.5 * n * nu * nu
    # a CDF is at most 1, so |signed sum| <= exp(N nu^2 / 2); once the absolute
    # sum alone forces condition > max_condition the series is hopeless
    log_abs_cap = math.log(max_condition) - prefactor

    K = max_terms
    lf = sp.gammaln(np.arange(K + 2, dtype=float))  # lf[j] = ln((j-1)!)
    ln_nu_half = math.log(nu / 2.0) if nu > 0 else -math.inf

    # beta~_k = beta_k t^(2k), alpha via Cauchy product of two known series
    lb = np.full(K + 1, -math.inf)
    sb = np.zeros(K + 1)
    lb_abs = np.full(K + 1, -math.inf)
    ld = np.full(K + 1, -math.inf)
    sd = np.zeros(K + 1)
    ld_abs = np.full(K + 1, -math.inf)
    lb[0], sb[0], lb_abs[0] = 0.0, 1.0, 0.0
    ld[0], sd[0], ld_abs[0] = 0.0, 1.0, 0.0

    def log_term(i, logd):
        return logd + n * lt2 - sp.gammaln(2 * (i + n) + 1)

    total_l, total_s = log_term(0, 0.0), 1.0
    abs_l = total_l
    prev_abs_term = abs_l
    used = 1
    for i in range(1, K + 1):
        # alpha_i from l = 0..i: (-1/2)^l / l! * (nu/2)^(2(i-l)) / ((i-l)!)^2
        l = np.arange(i + 1)
        if nu > 0:
            la = -l * math.log(2.0) - lf[l + 1] + 2 * (i - l) * ln_nu_half - 2 * lf[i - l + 1]
            sa = np.where(l % 2 == 0, 1.0, -1.0)
        else:
            la = np.array([-i * math.log(2.0) - lf[i + 1]])
            sa = np.array([1.0 if i % 2 == 0 else -1.0])
        la_s, sa_s = _signed_lse(la, sa)
        la_abs = _lse(la)
        base = sp.gammaln(2 * i + 2) + i * lt2
        lb[i], sb[i], lb_abs[i] = base + la_s, sa_s, base + la_abs

        k = np.arange(1, i + 1)
        coef = (n + 1) * k - i
        nz = coef != 0
        k = k[nz]
        coef = coef[nz].astype(float)
        logs = np.log(np.abs(coef)) + lb[k] + ld[i - k]
        signs = np.sign(coef) * sb[k] * sd[i - k]
        ds, dsg = _signed_lse(logs, signs)
        ld[i], sd[i] = ds - math.log(i), dsg
        ld_abs[i] = _lse(np.log(np.abs(coef)) + lb_abs[k] + ld_abs[i - k]) - math.log(i)

        lt_signed = log_term(i, ld[i])
        lt_abs = log_term(i, ld_abs[i])
        total_l, total_s = _signed_lse(np.array([total_l, lt_signed]), np.array([total_s, sd[i]]))
        abs_l = np.logaddexp(abs_l, lt_abs)
        used = i + 1
        if abs_l > log_abs_cap:
            raise SeriesInstabilityError(
                f"series for N={n}, nu={nu:.4g}, t={t:.4g} loses all precision",
                condition=math.exp(min(abs_l + prefactor, 700.0)))
        if i > 2 * n and lt_abs < prev_abs_term and lt_abs - abs_l < math.log(rel_tol) \
                and total_s != 0 and lt_abs - total_l < math.log(rel_tol):
            break
        prev_abs_term = lt_abs
    else:
        raise SeriesInstabilityError(f"series did not converge in {K} terms")

    if total_s <= 0:
        value, cond = 0.0, math.inf
    else:
        cond = math.exp(abs_l - total_l)
        value = math.exp(prefactor + total_l)
    if cond > max_condition:
        raise SeriesInstabilityError(
            f"series for N={n}, nu={nu:.4g}, t={t:.4g} is ill-conditioned ({cond:.3g})", condition=cond)
    return min(max(value, 0.0), 1.0), cond, used


def rician_sum_cdf(x: float, n: int, a: float, sigma: float = 1.0, method: str = "auto") -> SumCdf:
    """CDF of a sum of N Rician(a, sigma) magnitudes at ``x``.

    ``method="auto"`` evaluates the power series and, if it is too
    ill-conditioned, falls back to the lattice convolution; the returned
    ``method`` field records which route produced the value.  ``"series"``
    raises instead of falling back; ``"convolution"`` skips the series.
    """
    if method not in ("auto", "series", "convolution"):
        raise DomainError(f"unknown method {method!r}")
    n = _check_n(n)
    x = float(_check_nonneg(x, "x"))
    if x == 0.0:
        return SumCdf(0.0, "series", 1.0)
    if method == "convolution":
        return SumCdf(sum_cdf_numeric(x, n, a, sigma), "convolution")
    try:
        value, cond, _ = rician_sum_series(x, n, a, sigma)
        return SumCdf(value, "series", cond)
    except SeriesInstabilityError as exc:
        if method == "series":
            raise
        return SumCdf(sum_cdf_numeric(x, n, a, sigma), "convolution",
                      exc.condition if exc.condition is not None else math.inf)


# -- fitting the SAA correction ---------------------------------------------

def _fit_grid(n):
    return np.linspace(0.5 * math.sqrt(n), 3.0 * n, 400)


def fit_error_coeffs(n: int, sigma: float = 1.0, method: str = "convolution",
                     draws: int = 10_000_000, seed: int = 0,
                     max_residual: float = FIT_MAX_RESIDUAL) -> ErrorFitCoeffs:
    """Least-squares fit of the SAA correction template for one N.

    The target is ``saa_cdf - true CDF`` on 400 points spanning
    [0.5 sigma sqrt(N), 3 N sigma].  The true CDF comes from the lattice
    convolution (``method="convolution"``) or from the empirical CDF of
    ``draws`` simulated sums (``method="montecarlo"``).  Coefficients are
    sigma-normalized, so ``sigma`` does not change the result.
    """
    n = _check_n(n)
    _check_pos(sigma, "sigma")
    if n == 1:
        return ErrorFitCoeffs.zero(1)
    t = _fit_grid(n)
    if method == "convolution":
        truth = sum_cdf_numeric(t, n)
    elif method == "montecarlo":
        from .signal_model import substream

        rng = substream(seed, 0x5A4, n)
        sums = np.empty(draws)
        step = max(1, 4_000_000 // n)
        for lo in range(0, draws, step):
            m = min(step, draws - lo)
            sums[lo:lo + m] = np.hypot(rng.standard_normal((m, n)), rng.standard_normal((m, n))).sum(axis=1)
        sums.sort()
        truth = np.searchsorted(sums, t, side="right") / draws
    else:
        raise DomainError(f"unknown method {method!r}")
    target = saa_cdf(t, n) - truth

    def resid(p):
        return f_error(t, n, 1.0, ErrorFitCoeffs(n, p[0], p[1], p[2])) - target

    best = None
    for a2 in (0.0, 0.3, 0.6, 0.9):
        for a1 in (0.5, 1.0, 2.0):
            for a0 in (0.1, 1.0, 10.0):
                try:
                    r = optimize.least_squares(resid, [a0, a1, a2], bounds=([0.0, 1e-3, 0.0], [np.inf, 50.0, 5.0]),
                                               x_scale="jac")
                except (ValueError, FloatingPointError):
                    continue
                if np.all(np.isfinite(r.fun)) and (best is None or r.cost < best.cost):
                    best = r
    if best is None:
        raise FitQualityError(f"no fit converged for N={n}")
    sup = float(np.max(np.abs(best.fun)))
    coeffs = ErrorFitCoeffs(n, float(best.x[0]), float(best.x[1]), float(best.x[2]), sup)
    if sup > max_residual:
        raise FitQualityError(f"fit residual {sup:.3g} for N={n} exceeds {max_residual}", residual=sup)
    return coeffs


# -- coefficient data file --------------------------------------------------

_HEADER = (
    "# SAA correction coefficients, sigma-normalized\n"
    f"# format-version: {COEFFS_FORMAT_VERSION}\n"
    "# columns: n a0 a1 a2 residual  (residual = sup-norm of the fit on its grid)\n"
)


def save_error_coeffs(path, coeffs: Iterable[ErrorFitCoeffs]) -> None:
    lines = [_HEADER]
    for c in sorted(coeffs, key=lambda c: c.n):
        lines.append(f"{c.n} {c.a0!r} {c.a1!r} {c.a2!r} {c.residual!r}\n")
    Path(path).write_text("".join(lines))


def load_error_coeffs(path=None) -> dict:
    """Read a coefficient table; the packaged one when ``path`` is None."""
    if path is None:
        text = resources.files("envdetect").joinpath("data/error_fit_coeffs.txt").read_text()
    else:
        text = Path(path).read_text()
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise DomainError(f"line {lineno}: expected 5 columns, got {len(parts)}")
        n = int(parts[0])
        table[n] = ErrorFitCoeffs(n, *(float(p) for p in parts[1:]))
    return table


@lru_cache(maxsize=1)
def _packaged():
    try:
        return load_error_coeffs()
    except FileNotFoundError:
        return {}


@lru_cache(maxsize=None)
def _fitted(n):
    return fit_error_coeffs(n)


def error_coeffs_for(n: int, table: Optional[dict] = None) -> ErrorFitCoeffs:
    """Coefficients for N from ``table`` (default: packaged data), fitting if absent."""
    n = _check_n(n)
    if n == 1:
        return ErrorFitCoeffs.zero(1)
    src = _packaged() if table is None else table
    if n in src:
        return src[n]
    return _fitted(n)

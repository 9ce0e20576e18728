"""Monte Carlo estimation of detector error rates.

Trials are split into fixed-size chunks.  Each chunk of each hypothesis at
each (N, SNR) point draws from its own substream keyed by
``(n, snr in milli-dB, hypothesis, chunk index)``.  The detector is not
part of the key, so every detector in a run sees the same blocks.  Only
integer counts are aggregated, so results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .detection import (
    CASE_ORDER,
    RidThresholds,
    amplitude_batch,
    default_thresholds,
    energy_batch,
    glrt_batch,
    rid_batch,
)
from .errors import ConvergenceError, DomainError
from .performance import RatePoint, analytic_rates, pe
from .signal_model import amplitude_for_snr_db, draw_magnitudes, substream
from .sumdist import error_coeffs_for

__all__ = [
    "DETECTORS",
    "MIN_TRIALS",
    "SweepConfig",
    "EmpiricalRates",
    "Comparison",
    "estimate_rates",
    "sweep",
    "paired_decisions",
    "compare_analytic",
    "z_score",
]

DETECTORS = ("ed", "ad", "glrt", "rid")
MIN_TRIALS = 1000
CHUNK = 50_000
Z_FLAG = 4.0
H0, H1 = 0, 1


def _snr_key(snr_db: float) -> int:
    return int(round(snr_db * 1000))


def _check_detectors(detectors):
    dets = tuple(d.lower() for d in detectors)
    if not dets:
        raise DomainError("at least one detector is required")
    bad = [d for d in dets if d not in DETECTORS]
    if bad:
        raise DomainError(f"unknown detector(s) {bad}; choose from {DETECTORS}")
    return dets


@dataclass(frozen=True)
class SweepConfig:
    n_values: Sequence[int]
    snr_db_values: Sequence[float]
    trials: int
    master_seed: int
    detectors: Sequence[str] = ("ed",)
    sigma2: float = 1.0
    workers: int = 1
    chunk: int = CHUNK

    def __post_init__(self):
        if not self.n_values or not self.snr_db_values:
            raise DomainError("n_values and snr_db_values must be nonempty")
        if any(isinstance(n, bool) or int(n) != n or n < 1 for n in self.n_values):
            raise DomainError("n_values must be positive integers")
        if not all(math.isfinite(s) for s in self.snr_db_values):
            raise DomainError("snr values must be finite")
        if int(self.trials) != self.trials or self.trials < MIN_TRIALS:
            raise DomainError(f"trials must be an integer >= {MIN_TRIALS}, got {self.trials!r}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError("sigma2 must be positive and finite")
        if self.workers < 1 or self.chunk < 1:
            raise DomainError("workers and chunk must be >= 1")
        object.__setattr__(self, "detectors", _check_detectors(self.detectors))


@dataclass(frozen=True)
class EmpiricalRates:
    detector: str
    snr_db: float
    rate_point: RatePoint
    std_err_pfa: float
    std_err_pmd: float
    trials: int
    # RID only: counts per case in CASE_ORDER, separately for H0 and H1 blocks
    case_histogram: Optional[Dict[str, Dict[str, int]]] = None
    failures: int = 0


@dataclass(frozen=True)
class Comparison:
    detector: str
    n: int
    snr_db: float
    z_pfa: Optional[float]
    z_pmd: Optional[float]
    status: str  # "ok", "flagged" or "empirical-only"

    @property
    def flagged(self) -> bool:
        return self.status == "flagged"


def _draw(seed, n, snr_db, hyp, chunk_idx, size, sigma2):
    rng = substream(seed, n, _snr_key(snr_db), hyp, chunk_idx)
    amp = amplitude_for_snr_db(snr_db, sigma2) if hyp == H1 else 0.0
    return draw_magnitudes(rng, amp, math.sqrt(sigma2), n, size)


def _glrt_counting_failures(x, sigma2):
    try:
        return glrt_batch(x, sigma2), 0
    except ConvergenceError:
        out = np.zeros(x.shape[0], dtype=bool)
        valid = np.ones(x.shape[0], dtype=bool)
        for i, row in enumerate(x):
            try:
                out[i] = glrt_batch(row[None, :], sigma2)[0]
            except ConvergenceError:
                valid[i] = False
        return out[valid], int((~valid).sum())


def _decide(x, sigma2, detectors, th):
    """H1 decisions per detector for one chunk, plus RID case codes."""
    ed = energy_batch(x, sigma2)
    ad = amplitude_batch(x, sigma2)
    out, cases, failures = {}, None, 0
    for d in detectors:
        if d == "ed":
            out[d] = ed
        elif d == "ad":
            out[d] = ad
        elif d == "rid":
            out[d], cases = rid_batch(x, sigma2, th, ed=ed, ad=ad)
        else:
            out[d], failures = _glrt_counting_failures(x, sigma2)
    return out, cases, failures


def _run_chunk(task):
    seed, n, snr_db, hyp, chunk_idx, size, sigma2, detectors, th = task
    x = _draw(seed, n, snr_db, hyp, chunk_idx, size, sigma2)
    dec, cases, failures = _decide(x, sigma2, detectors, th)
    counts = {d: (int(np.count_nonzero(v)), int(v.size)) for d, v in dec.items()}
    hist = np.bincount(cases, minlength=4).tolist() if cases is not None else None
    return (n, _snr_key(snr_db), hyp), counts, hist, failures


def _tasks(seed, n, snr_db, trials, chunk, sigma2, detectors, th):
    for hyp in (H0, H1):
        for c, lo in enumerate(range(0, trials, chunk)):
            yield (seed, n, snr_db, hyp, c, min(chunk, trials - lo), sigma2, detectors, th)


def _std_err(p, trials):
    return math.sqrt(p * (1.0 - p) / trials) if trials else float("nan")


def _run(seed, points, trials, chunk, sigma2, detectors, workers, thresholds=None):
    """Aggregate counts for every (n, snr) in ``points``; returns EmpiricalRates per detector and point."""
    th_for = {}
    for n, _ in points:
        if "rid" in detectors and n not in th_for:
            th_for[n] = thresholds if thresholds is not None else default_thresholds(n)
    tasks = [t for n, s in points for t in _tasks(seed, n, s, trials, chunk, sigma2, detectors, th_for.get(n))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]

    agg = {}
    for key, counts, hist, failures in results:
        slot = agg.setdefault(key, {"counts": {d: [0, 0] for d in detectors}, "hist": [0] * 4, "fail": 0})
        for d, (k, m) in counts.items():
            slot["counts"][d][0] += k
            slot["counts"][d][1] += m
        if hist is not None:
            slot["hist"] = [a + b for a, b in zip(slot["hist"], hist)]
        slot["fail"] += failures

    out = {}
    for n, s in points:
        k0, k1 = (n, _snr_key(s), H0), (n, _snr_key(s), H1)
        a = amplitude_for_snr_db(s, 1.0)
        for d in detectors:
            fa, t0 = agg[k0]["counts"][d]
            hits, t1 = agg[k1]["counts"][d]
            pfa = fa / t0
            pmd = (t1 - hits) / t1
            hist = None
            if d == "rid":
                hist = {"h0": dict(zip((c.value for c in CASE_ORDER), agg[k0]["hist"])),
                        "h1": dict(zip((c.value for c in CASE_ORDER), agg[k1]["hist"]))}
            rp = RatePoint(n, a, pfa, pmd, pe(pfa, pmd), "empirical")
            out[(d, n, s)] = EmpiricalRates(d, s, rp, _std_err(pfa, t0), _std_err(pmd, t1), trials, hist,
                                            agg[k0]["fail"] + agg[k1]["fail"] if d == "glrt" else 0)
    return out


def estimate_rates(detector: str, n: int, snr_db: float, trials: int, seed: int, sigma2: float = 1.0,
                   thresholds: Optional[RidThresholds] = None, workers: int = 1, chunk: int = CHUNK) -> EmpiricalRates:
    """Empirical false-alarm and misdetection rates from ``trials`` blocks per hypothesis."""
    cfg = SweepConfig([n], [snr_db], trials, seed, [detector], sigma2, workers, chunk)
    d = cfg.detectors[0]
    res = _run(seed, [(int(n), float(snr_db))], trials, chunk, sigma2, cfg.detectors, workers, thresholds)
    return res[(d, int(n), float(snr_db))]


def sweep(config: SweepConfig) -> List[EmpiricalRates]:
    """All detectors x N x SNR points of ``config``, in that nesting order."""
    points = [(int(n), float(s)) for n in config.n_values for s in config.snr_db_values]
    res = _run(config.master_seed, points, config.trials, config.chunk, config.sigma2,
               config.detectors, config.workers)
    return [res[(d, n, s)] for d in config.detectors for n, s in points]


def paired_decisions(n: int, snr_db: float, hypothesis: int, trials: int, seed: int, sigma2: float = 1.0,
                     thresholds: Optional[RidThresholds] = None, chunk: int = CHUNK):
    """Per-trial ED, AD and RID decisions (and RID case codes) on the harness's own blocks."""
    th = thresholds if thresholds is not None else default_thresholds(n)
    parts = {"ed": [], "ad": [], "rid": [], "case": []}
    for c, lo in enumerate(range(0, trials, chunk)):
        x = _draw(seed, n, snr_db, hypothesis, c, min(chunk, trials - lo), sigma2)
        dec, cases, _ = _decide(x, sigma2, ("ed", "ad", "rid"), th)
        for d in ("ed", "ad", "rid"):
            parts[d].append(dec[d])
        parts["case"].append(cases)
    return {k: np.concatenate(v) for k, v in parts.items()}


def z_score(emp: float, ref: float, trials: int) -> float:
    se = math.sqrt(ref * (1.0 - ref) / trials) if 0.0 < ref < 1.0 else 0.0
    if se == 0.0:
        return 0.0 if emp == ref else math.inf
    return (emp - ref) / se


def compare_analytic(points: Sequence[EmpiricalRates], coeffs_table: Optional[dict] = None) -> List[Comparison]:
    """z-scores of empirical rates against the analytic ones, flagging |z| > 4.

    The standard error uses the analytic probability so that an empirical
    count of zero still gives a finite score.  GLRT and RID have no analytic
    counterpart and are reported as ``"empirical-only"``.  ``coeffs_table``
    maps N to AD correction coefficients (packaged table by default).
    """
    out = []
    for p in points:
        rp = p.rate_point
        if p.detector not in ("ed", "ad"):
            out.append(Comparison(p.detector, rp.n, p.snr_db, None, None, "empirical-only"))
            continue
        ref = analytic_rates(p.detector, rp.n, p.snr_db, error_coeffs_for(rp.n, coeffs_table))
        z_fa = z_score(rp.pfa, ref.pfa, p.trials)
        z_md = z_score(rp.pmd, ref.pmd, p.trials)
        status = "flagged" if max(abs(z_fa), abs(z_md)) > Z_FLAG else "ok"
        out.append(Comparison(p.detector, rp.n, p.snr_db, z_fa, z_md, status))
    return out

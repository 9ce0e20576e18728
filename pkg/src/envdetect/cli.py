"""Command-line interface: ``envdetect {thresholds,analytic,simulate,compare}``.

Exit codes: 0 success, 1 numeric failure or flagged comparison, 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

from . import montecarlo
from .csvio import CsvRow, read_rows, write_rows
from .errors import (
    ConvergenceError,
    DomainError,
    FitQualityError,
    SeriesInstabilityError,
    SolverError,
)
from .performance import pe, pfa_ad, pfa_ed, pmd_ad, pmd_ed, solve_a_star3, solve_a_star4
from .signal_model import amplitude_for_snr_db
from .sumdist import error_coeffs_for, load_error_coeffs

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
NUMERIC_ERRORS = (ConvergenceError, FitQualityError, SeriesInstabilityError, SolverError)
TABLE_N = (1, 2, 4, 8, 12, 16)


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    return vals


def _snr_range(text):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("need step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 9) for i in range(count)]


def _positive_float(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


def _n_values(args) -> List[int]:
    vals = list(args.n_list or []) + ([args.n] if args.n is not None else [])
    if not vals:
        raise UsageError("give --n or --n-list")
    if any(v < 1 for v in vals):
        raise UsageError("N must be >= 1")
    return vals


def _snr_values(args) -> List[float]:
    vals = list(args.snr_range or []) + ([args.snr_db] if args.snr_db is not None else [])
    if not vals:
        raise UsageError("give --snr-db or --snr-range")
    return vals


def _coeffs_table(args):
    return load_error_coeffs(args.coeffs) if args.coeffs else None


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_thresholds(args) -> int:
    ns = args.n_list if args.n_list is not None else list(TABLE_N)
    if args.n is not None:
        ns = ns + [args.n]
    if not ns:
        raise UsageError("--n-list is empty")
    table = _coeffs_table(args)
    status = EXIT_OK
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "a_star3", "a_star4", "m_star4", "a_star3_3dp", "a_star4_3dp", "m_star4_3dp"])
        for n in ns:
            try:
                a3 = solve_a_star3(n)
                a4, m4 = solve_a_star4(n, error_coeffs_for(n, table))
            except NUMERIC_ERRORS as exc:
                print(f"N={n}: {exc}", file=sys.stderr)
                status = EXIT_NUMERIC
                continue
            w.writerow([n, repr(a3), repr(a4), repr(m4), f"{a3:.3f}", f"{a4:.3f}", f"{m4:.3f}"])
    return status


def cmd_analytic(args) -> int:
    det = args.detector
    if det not in ("ed", "ad"):
        raise UsageError("analytic rates exist only for --detector ed or ad")
    table = _coeffs_table(args)
    sigma = math.sqrt(args.sigma2)
    rows = []
    for n in _n_values(args):
        for s in _snr_values(args):
            amp = amplitude_for_snr_db(s, args.sigma2)
            if det == "ed":
                pfa, pmd, source = pfa_ed(n), pmd_ed(n, amp / sigma), "analytic"
            else:
                pfa = pfa_ad(n, sigma, error_coeffs_for(n, table))
                res = pmd_ad(n, amp, sigma)
                pmd = res.value
                source = "analytic" if res.method == "series" else "semi_analytic"
            rows.append(CsvRow(det, n, s, amp / sigma, pfa, pmd, pe(pfa, pmd), source))
    with _output(args.out) as fh:
        write_rows(fh, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    dets = [d.strip() for d in args.detector.split(",")]
    try:
        cfg = montecarlo.SweepConfig(_n_values(args), _snr_values(args), args.trials, args.seed, dets,
                                     args.sigma2, args.workers)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    points = montecarlo.sweep(cfg)
    with _output(args.out) as fh:
        write_rows(fh, [CsvRow.from_empirical(p) for p in points])
    hists = [{"n": p.rate_point.n, "snr_db": p.snr_db, "trials": p.trials, "cases": p.case_histogram}
             for p in points if p.case_histogram is not None]
    if hists:
        side = args.cases_out or (f"{args.out}.cases.json" if args.out and args.out != "-" else None)
        text = json.dumps({"detector": "rid", "seed": args.seed, "points": hists}, indent=2)
        if side:
            Path(side).write_text(text + "\n")
        else:
            print(text, file=sys.stderr)
    failures = sum(p.failures for p in points)
    if failures:
        print(f"{failures} trial(s) failed to converge and were excluded", file=sys.stderr)
    return EXIT_OK


def _key(r: CsvRow):
    return r.detector, r.n, int(round(r.snr_db * 1000))


def cmd_compare(args) -> int:
    with open(args.analytic, newline="") as fh:
        analytic = read_rows(fh)
    with open(args.empirical, newline="") as fh:
        empirical = read_rows(fh)
    ref = {_key(r): r for r in analytic}
    emp_checked = [r for r in empirical if r.detector in ("ed", "ad")]
    if not analytic or not empirical or set(ref) != {_key(r) for r in emp_checked}:
        raise UsageError("analytic and empirical grids do not match")
    flagged = 0
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector", "n", "snr_db", "z_pfa", "z_pmd", "status"])
        for r in empirical:
            if r.detector not in ("ed", "ad"):
                w.writerow([r.detector, r.n, repr(r.snr_db), "", "", "empirical-only"])
                continue
            if not r.trials:
                raise UsageError(f"empirical row {_key(r)} has no trial count")
            a = ref[_key(r)]
            zf, zm = montecarlo.z_score(r.pfa, a.pfa, r.trials), montecarlo.z_score(r.pmd, a.pmd, r.trials)
            bad = max(abs(zf), abs(zm)) > montecarlo.Z_FLAG
            flagged += bad
            w.writerow([r.detector, r.n, repr(r.snr_db), f"{zf:.3f}", f"{zm:.3f}", "flagged" if bad else "ok"])
    if flagged:
        print(f"{flagged} point(s) with |z| > {montecarlo.Z_FLAG:g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envdetect", description="Noncoherent detection from magnitude samples.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        if grid:
            sp.add_argument("--n", type=int, help="block length N")
            sp.add_argument("--snr-db", type=float, help="single SNR point in dB")
            sp.add_argument("--snr-range", type=_snr_range, metavar="LO:HI:STEP", help="inclusive SNR grid in dB")
        sp.add_argument("--n-list", type=_int_list, help="comma-separated block lengths")
        sp.add_argument("--sigma2", type=_positive_float, default=1.0, help="noise variance per component")
        sp.add_argument("--coeffs", help="fitted AD correction coefficient file")
        sp.add_argument("--out", help="output CSV path (stdout if omitted)")

    t = sub.add_parser("thresholds", help="RID switch points A*(3), A*(4), M*(4) per N")
    common(t, grid=False)
    t.add_argument("--n", type=int, help="additional block length")
    t.set_defaults(func=cmd_thresholds)

    a = sub.add_parser("analytic", help="analytic ED/AD error rates")
    common(a)
    a.add_argument("--detector", choices=["ed", "ad"], required=True)
    a.set_defaults(func=cmd_analytic)

    s = sub.add_parser("simulate", help="Monte Carlo error rates")
    common(s)
    s.add_argument("--detector", default="ed", help="one or more of ed,ad,glrt,rid (comma-separated)")
    s.add_argument("--trials", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--cases-out", help="RID case histogram JSON (default: <out>.cases.json)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="z-scores of empirical rates against analytic ones")
    c.add_argument("analytic")
    c.add_argument("empirical")
    c.add_argument("--out", help="report CSV path (stdout if omitted)")
    c.set_defaults(func=cmd_compare)
    return p


def _glue_negative_values(argv):
    """Attach values like ``-10:10:1`` or ``-5`` to their flag so argparse accepts them."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--snr-range", "--snr-db"):
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
        else:
            out.append(tok)
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = _glue_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"envdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, OSError) as exc:
        print(f"envdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"envdetect {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

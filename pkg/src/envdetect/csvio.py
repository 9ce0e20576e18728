"""Reading and writing rate rows as CSV."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, List, Optional

from .errors import DomainError

HEADER = ("detector", "n", "snr_db", "a_over_sigma", "pfa", "pmd", "pe", "source",
          "std_err_pfa", "std_err_pmd", "trials")


@dataclass(frozen=True)
class CsvRow:
    detector: str
    n: int
    snr_db: float
    a_over_sigma: float
    pfa: float
    pmd: float
    pe: float
    source: str
    std_err_pfa: Optional[float] = None
    std_err_pmd: Optional[float] = None
    trials: Optional[int] = None

    @classmethod
    def from_empirical(cls, r) -> "CsvRow":
        rp = r.rate_point
        return cls(r.detector, rp.n, r.snr_db, rp.a_over_sigma, rp.pfa, rp.pmd, rp.pe, rp.source,
                   r.std_err_pfa, r.std_err_pmd, r.trials)

    @classmethod
    def from_rate_point(cls, detector: str, snr_db: float, rp) -> "CsvRow":
        return cls(detector, rp.n, snr_db, rp.a_over_sigma, rp.pfa, rp.pmd, rp.pe, rp.source)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(stream, rows: Iterable[CsvRow]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])


def rows_to_text(rows: Iterable[CsvRow]) -> str:
    buf = io.StringIO()
    write_rows(buf, rows)
    return buf.getvalue()


def _parse(kind, text, name, lineno):
    if text == "":
        return None
    try:
        if kind is int:
            return int(text)
        v = float(text)
        if not math.isfinite(v):
            raise ValueError
        return v
    except ValueError:
        raise DomainError(f"line {lineno}: bad value {text!r} for {name}") from None


def read_rows(stream) -> List[CsvRow]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return []
    if tuple(header) != HEADER:
        raise DomainError(f"unexpected CSV header {header!r}")
    kinds = {"n": int, "trials": int, "detector": str, "source": str}
    out = []
    for lineno, rec in enumerate(reader, 2):
        if not rec:
            continue
        if len(rec) != len(HEADER):
            raise DomainError(f"line {lineno}: expected {len(HEADER)} fields, got {len(rec)}")
        vals = []
        for f, text in zip(fields(CsvRow), rec):
            kind = kinds.get(f.name, float)
            vals.append(text if kind is str else _parse(kind, text, f.name, lineno))
        out.append(CsvRow(*vals))
    return out

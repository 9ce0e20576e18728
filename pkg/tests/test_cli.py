import csv
import io
import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from envdetect.cli import main
from envdetect.csvio import HEADER, CsvRow, read_rows, rows_to_text, write_rows
from envdetect.detection import TABLE_THRESHOLDS
from envdetect.errors import DomainError
from oracles import marcum_quad


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_thresholds_tables(capsys):
    code, out, _ = run(["thresholds", "--n-list", "1,2,4,8,12,16"], capsys)
    assert code == 0
    rows = {int(r["n"]): r for r in table(out)}
    assert sorted(rows) == [1, 2, 4, 8, 12, 16]
    misses = []
    for n, (a3, a4, m4) in TABLE_THRESHOLDS.items():
        for col, ref in (("a_star3", a3), ("a_star4", a4), ("m_star4", m4)):
            if abs(float(rows[n][col]) - ref) > 0.005:
                misses.append((n, col, float(rows[n][col]), ref))
    assert misses == []


def test_thresholds_n1_equal_entries(capsys):
    code, out, _ = run(["thresholds", "--n-list", "1"], capsys)
    assert code == 0
    (row,) = table(out)
    assert row["a_star3_3dp"] == row["a_star4_3dp"]


def test_thresholds_display_rounding(capsys):
    _, out, _ = run(["thresholds", "--n-list", "8"], capsys)
    (row,) = table(out)
    assert row["a_star3_3dp"] == f"{float(row['a_star3']):.3f}"


def test_thresholds_empty_list(capsys):
    code, _, err = run(["thresholds", "--n-list", ""], capsys)
    assert code == 2 and "empty" in err


def test_analytic_ed_constant_pfa(capsys):
    code, out, _ = run(["analytic", "--detector", "ed", "--n", "16", "--snr-range", "-10:10:1"], capsys)
    assert code == 0
    rows = read_rows(io.StringIO(out))
    assert len(rows) == 21
    assert len({r.pfa for r in rows}) == 1
    assert all(r.source == "analytic" and r.trials is None for r in rows)


def test_analytic_ed_n1(capsys):
    _, out, _ = run(["analytic", "--detector", "ed", "--n", "1", "--snr-db", "4"], capsys)
    (r,) = read_rows(io.StringIO(out))
    assert r.pfa == pytest.approx(0.367879, abs=1e-6)


def test_analytic_ad_n1_marcum(capsys):
    _, out, _ = run(["analytic", "--detector", "ad", "--n", "1", "--snr-db", "0"], capsys)
    (r,) = read_rows(io.StringIO(out))
    assert r.pmd == pytest.approx(1 - marcum_quad(1, math.sqrt(2), 1.5), abs=1e-10)
    assert r.a_over_sigma == pytest.approx(math.sqrt(2))


def test_analytic_ad_semi_analytic_flag(capsys):
    _, out, _ = run(["analytic", "--detector", "ad", "--n", "16", "--snr-db", "2"], capsys)
    (r,) = read_rows(io.StringIO(out))
    assert r.source == "semi_analytic"


def test_analytic_rejects_rid(capsys):
    code, _, _ = run(["analytic", "--detector", "rid", "--n", "4", "--snr-db", "0"], capsys)
    assert code == 2


def test_analytic_needs_grid(capsys):
    code, _, err = run(["analytic", "--detector", "ed", "--n", "4"], capsys)
    assert code == 2 and "snr" in err


def test_simulate_deterministic(tmp_path, capsys):
    args = ["simulate", "--detector", "ed", "--n", "16", "--snr-db", "0", "--trials", "100000", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    (r,) = read_rows(open(a))
    assert r.trials == 100000 and r.source == "empirical"


def test_simulate_rid_sidecar(tmp_path, capsys):
    out = tmp_path / "rid.csv"
    code, _, _ = run(["simulate", "--detector", "rid", "--n", "16", "--snr-db", "2", "--trials", "1000000",
                      "--seed", "1", "--out", str(out)], capsys)
    assert code == 0
    side = json.loads((tmp_path / "rid.csv.cases.json").read_text())
    (point,) = side["points"]
    assert point["cases"]["h0"]["ed0_ad1"] == 0
    assert point["cases"]["h1"]["ed0_ad1"] == 0


def test_simulate_rejects_few_trials(capsys):
    code, _, err = run(["simulate", "--n", "4", "--snr-db", "0", "--trials", "10"], capsys)
    assert code == 2 and "trials" in err


def test_simulate_parse_error(capsys):
    code, _, _ = run(["simulate", "--n", "four"], capsys)
    assert code == 2


def _pair(tmp_path, capsys, trials=1_000_000, n="16", snr="-5"):
    a, e = tmp_path / "a.csv", tmp_path / "e.csv"
    run(["analytic", "--detector", "ed", "--n", n, "--snr-db", snr, "--out", str(a)], capsys)
    run(["simulate", "--detector", "ed", "--n", n, "--snr-db", snr, "--trials", str(trials), "--seed", "3",
         "--out", str(e)], capsys)
    return a, e


def test_compare_matching_files(tmp_path, capsys):
    a, e = _pair(tmp_path, capsys)
    code, out, _ = run(["compare", str(a), str(e)], capsys)
    assert code == 0
    (row,) = table(out)
    assert row["status"] == "ok"


def test_compare_flags_corrupted_row(tmp_path, capsys):
    a, e = _pair(tmp_path, capsys, trials=20_000, n="4", snr="0")
    (r,) = read_rows(open(e))
    bad = CsvRow(r.detector, r.n, r.snr_db, r.a_over_sigma, r.pfa + 0.1, r.pmd, r.pe, r.source,
                 r.std_err_pfa, r.std_err_pmd, r.trials)
    e.write_text(rows_to_text([bad]))
    code, out, _ = run(["compare", str(a), str(e)], capsys)
    assert code == 1
    assert table(out)[0]["status"] == "flagged"


def test_compare_empty_files(tmp_path, capsys):
    a, e = tmp_path / "a.csv", tmp_path / "e.csv"
    a.write_text("")
    e.write_text(",".join(HEADER) + "\n")
    code, _, err = run(["compare", str(a), str(e)], capsys)
    assert code == 2 and "grid" in err


def test_compare_grid_mismatch(tmp_path, capsys):
    a, e = _pair(tmp_path, capsys, trials=2_000, n="4", snr="0")
    run(["analytic", "--detector", "ed", "--n", "4", "--snr-db", "1", "--out", str(a)], capsys)
    code, _, _ = run(["compare", str(a), str(e)], capsys)
    assert code == 2


@pytest.mark.parametrize("cmd", [
    ["analytic", "--detector", "ad", "--n", "4", "--snr-range", "-2:2:2"],
    ["simulate", "--detector", "ed,ad,rid", "--n", "4", "--snr-range", "-2:2:2", "--trials", "5000", "--seed", "4"],
])
def test_sigma2_scaling_invariance(cmd, capsys):
    outs = []
    for s2 in ("0.25", "1", "4"):
        code, out, _ = run(cmd + ["--sigma2", s2], capsys)
        assert code == 0
        outs.append([(r.detector, r.n, r.snr_db, r.pfa, r.pmd, r.pe) for r in read_rows(io.StringIO(out))])
    for other in outs[1:]:
        for x, y in zip(outs[0], other):
            assert x[:3] == y[:3]
            assert x[3:] == pytest.approx(y[3:], rel=1e-9, abs=1e-12)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
prob = st.floats(0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.builds(
    CsvRow,
    detector=st.sampled_from(["ed", "ad", "glrt", "rid"]),
    n=st.integers(1, 4096),
    snr_db=finite,
    a_over_sigma=st.floats(0, 1e6),
    pfa=prob, pmd=prob, pe=prob,
    source=st.sampled_from(["analytic", "semi_analytic", "empirical"]),
    std_err_pfa=st.none() | st.floats(0, 1),
    std_err_pmd=st.none() | st.floats(0, 1),
    trials=st.none() | st.integers(1000, 10 ** 9),
), max_size=8))
def test_csv_round_trip(rows):
    buf = io.StringIO()
    write_rows(buf, rows)
    assert read_rows(io.StringIO(buf.getvalue())) == rows


def test_csv_header_exact():
    assert rows_to_text([]).strip() == "detector,n,snr_db,a_over_sigma,pfa,pmd,pe,source,std_err_pfa,std_err_pmd,trials"
    with pytest.raises(DomainError):
        read_rows(io.StringIO("a,b\n1,2\n"))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "envdetect", "analytic", "--detector", "ed", "--n", "1",
                          "--snr-db", "0"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == ",".join(HEADER)

import json
import time

import numpy as np
import pytest

from bahcfilter.cli import main
from bahcfilter.csvio import read_matrix_csv, read_returns_csv
from bahcfilter.hierclust import Dendrogram, cophenetic_matrix, hcal_filter
from bahcfilter.matrices import sample_correlation


@pytest.fixture
def data(tmp_path):
    prices = tmp_path / "prices.csv"
    rets = tmp_path / "rets.csv"
    truth = tmp_path / "truth.csv"
    assert main(["synth", "--n", "12", "--t", "120", "--depth", "2", "--rho-levels", "0.6,0.2",
                 "--seed", "4", "-o", str(prices), "--truth", str(truth)]) == 0
    assert main(["synth", "--n", "12", "--t", "120", "--depth", "2", "--rho-levels", "0.6,0.2",
                 "--seed", "4", "--returns", "-o", str(rets)]) == 0
    return tmp_path


def test_synth_outputs(data):
    labels, c = read_matrix_csv(data / "truth.csv")
    assert labels[0] == "A00" and c.shape == (12, 12)
    r = read_returns_csv(data / "rets.csv")
    assert (r.n, r.t) == (12, 120)
    assert (data / "prices.csv").read_text().startswith("date,A00,")


def test_filter_prices_and_returns_agree(data, capsys):
    a, b = data / "a.csv", data / "b.csv"
    assert main(["filter", str(data / "prices.csv"), "--input-kind", "prices", "--method", "hcal", "-o", str(a)]) == 0
    assert main(["filter", str(data / "rets.csv"), "--method", "hcal", "-o", str(b)]) == 0
    np.testing.assert_allclose(read_matrix_csv(a)[1], read_matrix_csv(b)[1], atol=1e-10)
    assert "min_eigenvalue_corr" in capsys.readouterr().out


def test_filter_bahc_is_deterministic(data):
    outs = []
    for k in range(2):
        corr, cov = data / f"c{k}.csv", data / f"v{k}.csv"
        args = ["filter", str(data / "rets.csv"), "--m", "20", "--seed", "3", "-o", str(corr), "--cov-output", str(cov)]
        assert main(args) == 0
        outs.append((corr.read_bytes(), cov.read_bytes()))
    assert outs[0] == outs[1]


def test_hcal_refilter_is_byte_identical(data):
    first, second = data / "h1.csv", data / "h2.csv"
    assert main(["filter", str(data / "rets.csv"), "--method", "hcal", "-o", str(first)]) == 0
    assert main(["filter", str(first), "--input-kind", "matrix", "--method", "hcal", "-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_dendro(data):
    table, coph = data / "t.txt", data / "coph.csv"
    assert main(["dendro", str(data / "rets.csv"), "--table", str(table), "--cophenetic", str(coph)]) == 0
    with open(table) as fh:
        dend = Dendrogram.read_table(fh)
    assert dend.n_leaves == 12
    np.testing.assert_array_equal(read_matrix_csv(coph)[1], cophenetic_matrix(dend))
    c = sample_correlation(read_returns_csv(data / "rets.csv"))
    off = ~np.eye(12, dtype=bool)
    np.testing.assert_allclose(1 - read_matrix_csv(coph)[1][off], hcal_filter(c)[off], atol=1e-12)


def test_diagnose(data):
    rets = read_returns_csv(data / "rets.csv")
    ins, outs = data / "in.csv", data / "out.csv"
    from bahcfilter.csvio import write_returns_csv
    from bahcfilter.matrices import ReturnsMatrix

    for path, sl in ((ins, slice(0, 80)), (outs, slice(80, 120))):
        with open(path, "w", newline="") as fh:
            write_returns_csv(fh, ReturnsMatrix(rets.data[:, sl], rets.labels), [str(k) for k in range(sl.stop - sl.start)])
    result = data / "diag.json"
    assert main(["diagnose", str(ins), str(outs), "--methods", "hcal,lw", "--metrics", "frob_corr,eps_hi", "-o", str(result)]) == 0
    rows = json.loads(result.read_text())
    assert [(r["method"], r["metric"]) for r in rows] == [
        ("hcal", "frob_corr"), ("hcal", "eps_hi"), ("lw", "frob_corr"), ("lw", "eps_hi")
    ]
    assert all(r["value"] is not None and r["value"] >= 0 for r in rows)


def test_backtest_synthetic_is_reproducible_across_threads(tmp_path):
    base = ["backtest", "--synthetic", "--t-in", "20,30", "--t-out", "10", "--n-assets", "10",
            "--n-sims", "4", "--methods", "bahc:m=10;lw;cv:folds=3;sample", "--depth", "2", "--rho-levels", "0.5,0.2"]
    t0 = time.perf_counter()
    assert main(base + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(base + ["--out-dir", str(tmp_path / "b")]) == 0
    assert main(base + ["--out-dir", str(tmp_path / "c"), "--threads", "2"]) == 0
    assert time.perf_counter() - t0 < 30
    for name in ("records.ndjson", "summary.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    lines = (tmp_path / "a" / "records.ndjson").read_text().splitlines()
    assert len(lines) == 2 * 4 * 4 * 8
    header = (tmp_path / "a" / "summary.csv").read_text().splitlines()[0]
    assert header == "t_in,method,metric,n,n_na,mean,median,bahc_win_fraction"


def test_backtest_price_file(data, tmp_path):
    out = tmp_path / "bt"
    args = ["backtest", "--input", str(data / "prices.csv"), "--t-in", "30", "--t-out", "10", "--n-assets", "8",
            "--n-sims", "3", "--methods", "hcal,lw", "--metrics", "realized_risk_lo,frob_cov", "--out-dir", str(out)]
    assert main(args) == 0
    assert len((out / "records.ndjson").read_text().splitlines()) == 3 * 2 * 2


def test_config_file_supplies_defaults_and_flags_win(data, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('seed = 5\n[filter]\nmethod = "hcal"\nm = 7\n')
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", str(cfg), "filter", str(data / "rets.csv"), "-o", str(a)]) == 0
    assert main(["filter", str(data / "rets.csv"), "--method", "hcal", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert main(["--config", str(cfg), "filter", str(data / "rets.csv"), "--method", "sample", "-o", str(c)]) == 0
    np.testing.assert_allclose(read_matrix_csv(c)[1], sample_correlation(read_returns_csv(data / "rets.csv")), atol=1e-15)


def test_exit_codes(data, tmp_path, capsys):
    rets = str(data / "rets.csv")
    assert main(["filter", rets, "--method", "quest", "-o", str(tmp_path / "x.csv")]) == 2
    assert main(["backtest", "--synthetic", "--methods", "", "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = \n")
    assert main(["--config", str(bad), "filter", rets]) == 2
    assert main(["filter", str(tmp_path / "missing.csv"), "-o", str(tmp_path / "x.csv")]) == 3
    const = tmp_path / "const.csv"
    const.write_text("date,A,B\n1,0.1,0.0\n2,0.2,0.0\n3,-0.1,0.0\n")
    assert main(["filter", str(const), "--method", "sample", "-o", str(tmp_path / "x.csv")]) == 3
    assert main(["filter", str(const), "--method", "bahc", "--m", "3", "-o", str(tmp_path / "x.csv")]) == 4
    err = capsys.readouterr().err
    assert "configuration error" in err and "data error" in err and "numerical failure" in err

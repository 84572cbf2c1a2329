import io

import numpy as np
import pytest
from scipy import stats

from bahcfilter.baselines import FilterMethod, Method
from bahcfilter.errors import ConfigError, DataError
from bahcfilter.harness import (
    METRICS,
    ExperimentRecord,
    PriceSeries,
    SimulationSpec,
    SyntheticConfig,
    nested_block_correlation,
    prices_to_returns,
    read_price_csv,
    read_records,
    run_experiment,
    sample_window,
    summarize,
    synth_hierarchical,
    write_price_csv,
    write_records,
)
from bahcfilter.hierclust import hcal_filter
from bahcfilter.matrices import min_eigenvalue, sample_correlation


def _series(n_assets, n_dates, seed=0, gaps=()):
    rng = np.random.default_rng(seed)
    rets = rng.normal(0, 0.01, (n_assets, n_dates - 1))
    prices = 100 * np.cumprod(np.c_[np.ones(n_assets), 1 + rets], axis=1)
    for i, k in gaps:
        prices[i, k] = np.nan
    dates = tuple(f"2020-{1 + k // 28:02d}-{1 + k % 28:02d}" for k in range(n_dates))
    return PriceSeries(dates, prices, tuple(f"T{i}" for i in range(n_assets)))


def _spec(**kw):
    base = dict(t_in=10, t_out=5, n_assets=4, n_sims=3, seed=0, methods=(FilterMethod(Method.SAMPLE),))
    base.update(kw)
    return SimulationSpec(**base)


def test_prices_to_returns():
    s = PriceSeries(("a", "b", "c"), np.array([[100.0, 110.0, 99.0], [1.0, 1.0, 2.0]]), ("X", "Y"))
    r = prices_to_returns(s)
    np.testing.assert_allclose(r.data, [[0.1, -0.1], [0.0, 1.0]], atol=1e-15)
    assert r.labels == ("X", "Y")
    with pytest.raises(DataError):
        prices_to_returns(_series(3, 20, gaps=[(0, 5)]))


def test_price_series_validation():
    with pytest.raises(DataError):
        PriceSeries(("b", "a"), np.ones((1, 2)), ("X",))
    with pytest.raises(DataError):
        PriceSeries(("a", "b"), np.array([[1.0, -1.0]]), ("X",))


def test_price_csv_round_trip():
    s = _series(3, 12, gaps=[(1, 4)])
    buf = io.StringIO()
    write_price_csv(buf, s)
    back = read_price_csv(io.StringIO(buf.getvalue()))
    assert back.dates == s.dates and back.tickers == s.tickers
    np.testing.assert_array_equal(np.isnan(back.prices), np.isnan(s.prices))
    np.testing.assert_array_equal(np.nan_to_num(back.prices), np.nan_to_num(s.prices))


def test_single_admissible_start():
    s = _series(4, 16)  # 15 returns = t_in + t_out
    for sim in range(5):
        r_in, r_out, start = sample_window(s, _spec(), sim)
        assert start == 0 and r_in.t == 10 and r_out.t == 5
    full = prices_to_returns(s).data
    np.testing.assert_array_equal(np.c_[r_in.data, r_out.data], full)


def test_window_determinism_and_asset_choice():
    s = _series(10, 60)
    a = sample_window(s, _spec(seed=3), 7)
    b = sample_window(s, _spec(seed=3), 7)
    assert a[2] == b[2] and a[0].labels == b[0].labels
    np.testing.assert_array_equal(a[0].data, b[0].data)
    assert len(set(a[0].labels)) == 4


def test_window_start_uniform():
    s = _series(4, 25)  # 24 returns, span 15: starts 0..9
    counts = np.bincount([sample_window(s, _spec(seed=1), k)[2] for k in range(2000)], minlength=10)
    assert len(counts) == 10
    assert stats.chisquare(counts).pvalue > 1e-3


def test_window_errors():
    with pytest.raises(DataError):
        sample_window(_series(4, 15), _spec(), 0)
    with pytest.raises(DataError):
        sample_window(_series(3, 30), _spec(), 0)
    gappy = _series(5, 16, gaps=[(0, 3), (1, 8)])
    with pytest.raises(DataError):
        sample_window(gappy, _spec(), 0)
    np.testing.assert_equal(sample_window(gappy, _spec(n_assets=3), 0)[0].labels, ("T2", "T3", "T4"))


def test_earliest_out_date():
    s = _series(4, 40)
    cut = s.dates[30]
    for k in range(50):
        _, _, start = sample_window(s, _spec(earliest_out_date=cut), k)
        assert s.dates[start + 10 + 1] >= cut
    with pytest.raises(DataError):
        sample_window(s, _spec(earliest_out_date="2099-01-01"), 0)


def test_synthetic_block_structure():
    np.testing.assert_array_equal(nested_block_correlation(5, 1, (0.0,)), np.eye(5))
    c = nested_block_correlation(4, 2, (0.6, 0.2))
    expected = np.array([[1, 0.6, 0.2, 0.2], [0.6, 1, 0.2, 0.2], [0.2, 0.2, 1, 0.6], [0.2, 0.2, 0.6, 1]])
    np.testing.assert_array_equal(c, expected)
    for n in (3, 7, 16, 37, 100):
        for depth in (1, 2, 3, 4):
            levels = np.linspace(0.8, 0.1, depth) if depth > 1 else (0.5,)
            assert min_eigenvalue(nested_block_correlation(n, depth, levels)) > 0
    with pytest.raises(ConfigError):
        nested_block_correlation(4, 2, (0.2, 0.6))


def test_linkage_recovers_planted_levels():
    r, c_true = synth_hierarchical(16, 20_000, 3, (0.6, 0.4, 0.2), seed=5)
    assert np.max(np.abs(hcal_filter(sample_correlation(r)) - c_true)) < 0.03


def test_record_layout_and_duplicate_methods():
    bahc = FilterMethod(Method.BAHC, m=5)
    spec = _spec(methods=(bahc, FilterMethod(Method.LW), bahc), n_sims=4, n_assets=6, t_in=20)
    recs = run_experiment(spec, SyntheticConfig(depth=2, rho_levels=(0.5, 0.2)))
    assert len(recs) == 4 * 3 * len(METRICS)
    assert spec.method_labels() == ["bahc", "lw", "bahc#2"]
    first = {(r.sim_id, r.metric): r.value for r in recs if r.method == "bahc"}
    second = {(r.sim_id, r.metric): r.value for r in recs if r.method == "bahc#2"}
    assert first == second
    rows = summarize(recs)
    for row in rows:
        if row.method in ("bahc", "bahc#2") and row.bahc_win_fraction is not None:
            assert row.bahc_win_fraction == 0.0


def test_summary_recomputed_from_record_file():
    spec = _spec(methods=(FilterMethod(Method.BAHC, m=5), FilterMethod(Method.CV, folds=4)), t_in=12)
    recs = run_experiment(spec, SyntheticConfig(depth=2, rho_levels=(0.5, 0.2)))
    buf = io.StringIO()
    write_records(buf, recs)
    back = read_records(io.StringIO(buf.getvalue()))
    assert back == recs
    assert summarize(back) == summarize(recs)
    row = next(r for r in summarize(recs) if r.method == "cv" and r.metric == "frob_corr")
    vals = [r.value for r in recs if r.method == "cv" and r.metric == "frob_corr"]
    assert row.n == 3 and row.mean == pytest.approx(np.mean(vals))
    ref = [r.value for r in recs if r.method == "bahc" and r.metric == "frob_corr"]
    assert row.bahc_win_fraction == sum(a < b for a, b in zip(ref, vals)) / 3


def test_identity_population_realized_risk():
    # independent assets of equal volatility: long-short risk near sigma / sqrt(n)
    spec = _spec(methods=(FilterMethod(Method.LW),), metrics=("realized_risk_ls",), n_assets=10,
                 t_in=2000, t_out=2000, n_sims=5)
    cfg = SyntheticConfig(depth=1, rho_levels=(0.0,), vol_low=0.02, vol_high=0.02)
    vals = [r.value for r in run_experiment(spec, cfg)]
    np.testing.assert_allclose(vals, 0.02 / np.sqrt(10), rtol=0.1)


def test_sample_long_short_is_na_when_singular():
    spec = _spec(methods=(FilterMethod(Method.SAMPLE),), n_assets=12, t_in=8, n_sims=2)
    recs = run_experiment(spec, SyntheticConfig(depth=2, rho_levels=(0.5, 0.2)))
    ls = [r for r in recs if r.metric == "realized_risk_ls"]
    assert all(r.value is None and r.note.startswith("SingularCovariance") for r in ls)
    assert all(r.value is not None for r in recs if r.metric == "frob_corr")


def test_record_rejects_non_finite():
    with pytest.raises(DataError):
        ExperimentRecord(0, 10, 0, "lw", "frob_cov", float("nan"))
    rec = ExperimentRecord(1, 10, 3, "lw", "frob_cov", None, "why")
    assert ExperimentRecord.from_json(rec.to_json()) == rec


def test_spec_validation():
    with pytest.raises(ConfigError):
        _spec(methods=())
    with pytest.raises(ConfigError):
        _spec(metrics=("sharpe",))
    with pytest.raises(ConfigError):
        _spec(t_in=1)


@pytest.mark.slow
def test_threads_do_not_change_results():
    spec = _spec(methods=(FilterMethod(Method.BAHC, m=5), FilterMethod(Method.CV, folds=3)),
                 n_sims=6, n_assets=8, t_in=15)
    cfg = SyntheticConfig(depth=3, rho_levels=(0.6, 0.4, 0.2), seed=9)
    assert run_experiment(spec, cfg, threads=1) == run_experiment(spec, cfg, threads=2)
    s = _series(10, 80, seed=2)
    assert run_experiment(spec, s, threads=1) == run_experiment(spec, s, threads=2)

"""Experiment engine: price data, synthetic data, windowed simulations, summaries.

One simulation draws an in-sample window of ``t_in`` returns immediately
followed by ``t_out`` out-of-sample returns on ``n_assets`` assets, filters
the in-sample data with every requested method and scores the result
against the out-of-sample sample estimators.  Every (simulation, method,
metric) triple yields exactly one :class:`ExperimentRecord`; failures are
kept as records with ``value=None`` and a ``note``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import median
from typing import Iterable, Sequence, TextIO, Union

import numpy as np
from numpy.typing import NDArray

from .baselines import FilterMethod, Method, apply_filter
from .csvio import read_wide_csv
from .errors import BahcError, ConfigError, DataError, NonpositiveEigenvalue
from .matrices import (
    ReturnsMatrix,
    eigendecompose,
    frobenius_corr,
    frobenius_cov,
    sample_correlation,
    sample_covariance,
)
from .portfolio import min_variance_long_only, min_variance_long_short, realized_risk
from .spectral import eigenvector_stability, oracle, residues

__all__ = [
    "METRICS",
    "PriceSeries",
    "SimulationSpec",
    "SyntheticConfig",
    "ExperimentRecord",
    "read_price_csv",
    "write_price_csv",
    "prices_to_returns",
    "nested_block_correlation",
    "synth_hierarchical",
    "sample_window",
    "score_metric",
    "run_experiment",
    "summarize",
    "write_records",
    "read_records",
    "write_summary",
]

log = logging.getLogger(__name__)

Array = NDArray[np.float64]

METRICS = (
    "realized_risk_ls",
    "realized_risk_lo",
    "frob_corr",
    "frob_cov",
    "oracle_stability_corr",
    "oracle_stability_cov",
    "eps_hi",
    "eps_low",
)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _subseed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class PriceSeries:
    """Wide price table: one row per asset, one column per date; NaN marks a gap."""

    dates: tuple[str, ...]
    prices: Array
    tickers: tuple[str, ...]

    def __post_init__(self) -> None:
        prices = np.array(self.prices, dtype=np.float64)
        if prices.ndim != 2:
            raise DataError("prices must be a 2-d array (assets x dates)")
        dates = tuple(str(d) for d in self.dates)
        tickers = tuple(str(t) for t in self.tickers)
        if prices.shape != (len(tickers), len(dates)):
            raise DataError(
                f"prices shape {prices.shape} does not match {len(tickers)} tickers x {len(dates)} dates"
            )
        if any(a >= b for a, b in zip(dates, dates[1:])):
            raise DataError("dates must be strictly increasing")
        seen = prices[np.isfinite(prices)]
        if np.any(seen <= 0):
            raise DataError("prices must be strictly positive")
        if np.any(np.isinf(prices)):
            raise DataError("infinite price")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tickers)

    @property
    def n_returns(self) -> int:
        return len(self.dates) - 1


def read_price_csv(source: Union[str, Path, TextIO]) -> PriceSeries:
    """Read a wide CSV: header ``date,TICK1,TICK2,...``, one row per date, empty cell = missing."""
    dates, tickers, values = read_wide_csv(source)
    return PriceSeries(tuple(dates), values.T, tuple(tickers))


def write_price_csv(fh: TextIO, series: PriceSeries) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["date", *series.tickers])
    for k, d in enumerate(series.dates):
        col = series.prices[:, k]
        writer.writerow([d, *("" if math.isnan(x) else repr(float(x)) for x in col)])


def _simple_returns(prices: Array) -> Array:
    return prices[:, 1:] / prices[:, :-1] - 1.0


def prices_to_returns(series: PriceSeries) -> ReturnsMatrix:
    """``r_k = p_k / p_{k-1} - 1`` for a gap-free price table."""
    if not np.all(np.isfinite(series.prices)):
        raise DataError("price table has missing values; select a complete window first")
    return ReturnsMatrix(_simple_returns(series.prices), series.tickers)


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for simulations on nested-block Gaussian returns.

    Each simulation draws fresh returns for ``n_assets`` assets with
    per-asset daily volatilities uniform in ``[vol_low, vol_high]``.
    """

    depth: int = 4
    rho_levels: tuple[float, ...] = (0.6, 0.45, 0.3, 0.15)
    vol_low: float = 0.01
    vol_high: float = 0.03
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho_levels", tuple(float(x) for x in self.rho_levels))
        _check_levels(self.depth, self.rho_levels)
        if not 0 < self.vol_low <= self.vol_high:
            raise ConfigError("need 0 < vol_low <= vol_high")


def _check_levels(depth: int, rho_levels: Sequence[float]) -> None:
    if depth < 1 or len(rho_levels) != depth:
        raise ConfigError(f"need {depth} correlation levels, got {len(rho_levels)}")
    if any(not 0 <= r < 1 for r in rho_levels):
        raise ConfigError("correlation levels must lie in [0, 1)")
    if any(a <= b for a, b in zip(rho_levels, rho_levels[1:])):
        raise ConfigError("correlation levels must be strictly decreasing (innermost first)")


def nested_block_groups(n: int, depth: int) -> list[NDArray[np.int64]]:
    """Group label of every asset at each level, finest level first."""
    finest = np.empty(n, dtype=np.int64)
    for g, idx in enumerate(np.array_split(np.arange(n), 2 ** (depth - 1))):
        finest[idx] = g
    return [finest // 2**k for k in range(depth)]


def nested_block_correlation(n: int, depth: int, rho_levels: Sequence[float]) -> Array:
    """Balanced binary nested blocks: pairs first grouped at level ``k`` get ``rho_levels[k]``."""
    _check_levels(depth, rho_levels)
    c = np.full((n, n), np.nan)
    for labels, rho in zip(nested_block_groups(n, depth), rho_levels):
        same = (labels[:, None] == labels[None, :]) & np.isnan(c)
        c[same] = rho
    np.fill_diagonal(c, 1.0)
    return c


def synth_hierarchical(
    n: int,
    t: int,
    depth: int,
    rho_levels: Sequence[float],
    seed: int,
    vol: Union[float, Sequence[float]] = 1.0,
) -> tuple[ReturnsMatrix, Array]:
    """Gaussian returns with a nested-block population correlation.

    Returns ``(returns, c_true)``; ``vol`` sets the per-asset standard deviation.
    """
    c_true = nested_block_correlation(n, depth, rho_levels)
    chol = np.linalg.cholesky(c_true)
    z = _rng(seed).standard_normal((n, t))
    sd = np.broadcast_to(np.asarray(vol, dtype=np.float64), (n,))
    return ReturnsMatrix(sd[:, None] * (chol @ z)), c_true


@dataclass(frozen=True)
class SimulationSpec:
    t_in: int
    t_out: int = 42
    n_assets: int = 100
    n_sims: int = 100
    seed: int = 0
    methods: tuple[FilterMethod, ...] = ()
    metrics: tuple[str, ...] = METRICS
    earliest_out_date: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.t_in < 2 or self.t_out < 2 or self.n_assets < 2:
            raise ConfigError("need t_in >= 2, t_out >= 2 and n_assets >= 2")
        if self.n_sims < 1:
            raise ConfigError("need at least one simulation")
        if not self.methods:
            raise ConfigError("no filtering methods selected")
        unknown = set(self.metrics) - set(METRICS)
        if unknown or not self.metrics:
            raise ConfigError(f"unknown or empty metric selection: {sorted(unknown)}")

    def method_labels(self) -> list[str]:
        labels, seen = [], {}
        for m in self.methods:
            seen[m.label] = seen.get(m.label, 0) + 1
            labels.append(m.label if seen[m.label] == 1 else f"{m.label}#{seen[m.label]}")
        return labels


@dataclass(frozen=True)
class ExperimentRecord:
    sim_id: int
    t_in: int
    window_start: int
    method: str
    metric: str
    value: float | None
    note: str | None = None

    def __post_init__(self) -> None:
        if self.value is not None and not math.isfinite(self.value):
            raise DataError(f"non-finite metric value {self.value!r}; record it as NA instead")

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ExperimentRecord":
        return cls(**json.loads(line))


def sample_window(
    series: PriceSeries, spec: SimulationSpec, sim_id: int
) -> tuple[ReturnsMatrix, ReturnsMatrix, int]:
    """Random contiguous in/out windows on randomly chosen complete assets.

    Returns ``(r_in, r_out, start)`` where ``start`` indexes the first
    in-sample return.  The draw depends only on ``(spec.seed, sim_id)``.
    """
    span = spec.t_in + spec.t_out
    n_starts = series.n_returns - span + 1
    starts = np.arange(max(n_starts, 0))
    if spec.earliest_out_date is not None:
        # return k is dated by price k + 1; first out-of-sample return is start + t_in
        out_dates = np.array(series.dates, dtype=object)[starts + spec.t_in + 1]
        starts = starts[out_dates >= spec.earliest_out_date]
    if starts.size == 0:
        raise DataError(
            f"history of {series.n_returns} returns too short for t_in + t_out = {span}"
        )
    rng = _rng(spec.seed, sim_id)
    start = int(starts[rng.integers(starts.size)])
    block = series.prices[:, start : start + span + 1]
    complete = np.flatnonzero(np.all(np.isfinite(block), axis=1))
    if complete.size < spec.n_assets:
        raise DataError(
            f"only {complete.size} assets have complete data in window starting at {start}, "
            f"need {spec.n_assets}"
        )
    chosen = np.sort(rng.choice(complete, size=spec.n_assets, replace=False))
    rets = _simple_returns(block[chosen])
    tickers = [series.tickers[i] for i in chosen]
    return (
        ReturnsMatrix(rets[:, : spec.t_in], tickers),
        ReturnsMatrix(rets[:, spec.t_in :], tickers),
        start,
    )


def _synthetic_window(config: SyntheticConfig, spec: SimulationSpec, sim_id: int):
    n = spec.n_assets
    vol = _rng(config.seed, sim_id, 1).uniform(config.vol_low, config.vol_high, size=n)
    r, _ = synth_hierarchical(
        n, spec.t_in + spec.t_out, config.depth, config.rho_levels, _subseed(config.seed, sim_id), vol
    )
    return ReturnsMatrix(r.data[:, : spec.t_in]), ReturnsMatrix(r.data[:, spec.t_in :]), 0


def score_metric(metric: str, cov: Array, corr: Array, cov_out: Array, corr_out: Array | None) -> float:
    if metric == "realized_risk_ls":
        return realized_risk(min_variance_long_short(cov), cov_out)
    if metric == "realized_risk_lo":
        return realized_risk(min_variance_long_only(cov), cov_out)
    if metric == "frob_cov":
        return frobenius_cov(cov_out - cov)
    if metric == "oracle_stability_cov":
        return eigenvector_stability(eigendecompose(cov), cov_out, "covariance")
    if corr_out is None:
        raise DataError("out-of-sample correlation undefined (zero-variance asset)")
    if metric == "frob_corr":
        return frobenius_corr(corr_out - corr)
    if metric == "oracle_stability_corr":
        return eigenvector_stability(eigendecompose(corr), corr_out, "correlation")
    basis = eigendecompose(corr)
    z = oracle(basis, corr_out).oracle_eigenvalues
    try:
        eps_hi, eps_low = residues(basis.eigenvalues, z)
    except NonpositiveEigenvalue as exc:
        if metric == "eps_hi":
            return exc.eps_hi
        raise
    return eps_hi if metric == "eps_hi" else eps_low


def _note(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _simulate(job) -> list[ExperimentRecord]:
    spec, data, sim_id = job
    labels = spec.method_labels()

    def na_all(start: int, note: str) -> list[ExperimentRecord]:
        return [
            ExperimentRecord(sim_id, spec.t_in, start, lab, met, None, note)
            for lab in labels
            for met in spec.metrics
        ]

    try:
        if isinstance(data, SyntheticConfig):
            r_in, r_out, start = _synthetic_window(data, spec, sim_id)
        else:
            r_in, r_out, start = sample_window(data, spec, sim_id)
    except BahcError as exc:
        return na_all(-1, _note(exc))

    cov_out = sample_covariance(r_out)
    try:
        corr_out = sample_correlation(r_out)
    except BahcError:
        corr_out = None

    records = []
    for method, label in zip(spec.methods, labels):
        if method.tag in (Method.BAHC, Method.CV):
            method = method.with_seed(_subseed(method.seed, sim_id))
        try:
            cov, corr = apply_filter(method, r_in)
        except BahcError as exc:
            note = _note(exc)
            records.extend(
                ExperimentRecord(sim_id, spec.t_in, start, label, met, None, note)
                for met in spec.metrics
            )
            continue
        for met in spec.metrics:
            try:
                value, note = score_metric(met, cov, corr, cov_out, corr_out), None
                if not math.isfinite(value):
                    value, note = None, "non-finite value"
            except BahcError as exc:
                value, note = None, _note(exc)
            records.append(ExperimentRecord(sim_id, spec.t_in, start, label, met, value, note))
    return records


def run_experiment(
    spec: SimulationSpec,
    data: Union[PriceSeries, SyntheticConfig],
    threads: int = 1,
) -> list[ExperimentRecord]:
    """Run ``spec.n_sims`` simulations; output order is by ``sim_id`` whatever ``threads`` is."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    jobs = [(spec, data, k) for k in range(spec.n_sims)]
    if threads == 1:
        results = [_simulate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_simulate, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    records = [rec for batch in results for rec in batch]
    n_na = sum(r.value is None for r in records)
    if n_na:
        log.info("t_in=%d: %d of %d records are NA", spec.t_in, n_na, len(records))
    return records


def write_records(fh: TextIO, records: Iterable[ExperimentRecord]) -> None:
    for rec in records:
        fh.write(rec.to_json() + "\n")


def read_records(fh: TextIO) -> list[ExperimentRecord]:
    return [ExperimentRecord.from_json(line) for line in fh if line.strip()]


SUMMARY_FIELDS = ("t_in", "method", "metric", "n", "n_na", "mean", "median", "bahc_win_fraction")


@dataclass
class SummaryRow:
    t_in: int
    method: str
    metric: str
    n: int
    n_na: int
    mean: float | None
    median: float | None
    bahc_win_fraction: float | None = field(default=None)


def summarize(records: Sequence[ExperimentRecord]) -> list[SummaryRow]:
    """Per (t_in, method, metric): count, NA count, mean, median of non-NA values.

    ``bahc_win_fraction`` is the fraction of simulations, among those where
    both values exist, in which the first BAHC method scored strictly lower.
    """
    groups: dict[tuple[int, str, str], dict[int, float | None]] = {}
    order: list[str] = []
    for r in records:
        groups.setdefault((r.t_in, r.method, r.metric), {})[r.sim_id] = r.value
        if r.method not in order:
            order.append(r.method)
    ref = next((m for m in order if m.split("#")[0] == Method.BAHC.value), None)

    rows = []
    for (t_in, method, metric), by_sim in sorted(
        groups.items(), key=lambda kv: (kv[0][0], order.index(kv[0][1]), kv[0][2])
    ):
        vals = [v for _, v in sorted(by_sim.items()) if v is not None]
        win = None
        if ref is not None:
            ref_vals = groups.get((t_in, ref, metric), {})
            pairs = [
                (ref_vals[s], v)
                for s, v in sorted(by_sim.items())
                if v is not None and ref_vals.get(s) is not None
            ]
            if pairs:
                win = sum(a < b for a, b in pairs) / len(pairs)
        rows.append(
            SummaryRow(
                t_in,
                method,
                metric,
                len(vals),
                len(by_sim) - len(vals),
                float(np.mean(vals)) if vals else None,
                float(median(vals)) if vals else None,
                win,
            )
        )
    return rows


def write_summary(fh: TextIO, rows: Iterable[SummaryRow]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for row in rows:
        writer.writerow(
            ["" if v is None else repr(v) if isinstance(v, float) else v for v in asdict(row).values()]
        )

"""Command-line interface: ``bahc {filter,backtest,diagnose,synth,dendro}``.

Settings can also come from a TOML file given with ``--config``; keys use
the long flag names (``t_in``, ``n_sims``...) either at top level or in a
table named after the subcommand.  Flags given on the command line win.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .baselines import FilterMethod, Method, apply_filter
from .csvio import read_matrix_csv, read_returns_csv, write_matrix_csv, write_returns_csv
from .errors import BahcError, ConfigError, DataError, NumericalError
from .harness import (
    METRICS,
    PriceSeries,
    SimulationSpec,
    SyntheticConfig,
    prices_to_returns,
    read_price_csv,
    run_experiment,
    score_metric,
    summarize,
    synth_hierarchical,
    write_price_csv,
    write_records,
    write_summary,
)
from .hierclust import average_linkage, cophenetic_matrix, correlation_to_distance, hcal_filter
from .matrices import (
    ReturnsMatrix,
    frobenius_corr,
    frobenius_cov,
    min_eigenvalue,
    sample_correlation,
    sample_covariance,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("bahcfilter")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _int_list(value: Any) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    if isinstance(value, int):
        return [value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def _float_list(value: Any) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def _str_list(value: Any) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    # method options use commas too ("bahc:m=50,seed=3"), so split on ';' when present
    sep = ";" if ";" in str(value) else ","
    return [v.strip() for v in str(value).split(sep) if v.strip()]


def _methods(args) -> list[FilterMethod]:
    items = _str_list(args.methods) if args.methods is not None else []
    if not items:
        raise ConfigError("empty method list")
    out = []
    for item in items:
        # "bahc:m=50" keeps its own options; bare names take the global ones
        out.append(FilterMethod.parse(item, m=args.m, folds=args.folds, seed=args.seed))
    return out


def _load_returns(path: str, kind: str) -> ReturnsMatrix:
    if kind == "prices":
        series = read_price_csv(path)
        keep = np.all(np.isfinite(series.prices), axis=1)
        if not keep.all():
            log.warning("dropping %d assets with missing prices", int((~keep).sum()))
        series = PriceSeries(
            series.dates, series.prices[keep], [t for t, k in zip(series.tickers, keep) if k]
        )
        return prices_to_returns(series)
    return read_returns_csv(path)


def _write_matrix(path: str, m: np.ndarray, labels: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        write_matrix_csv(fh, m, labels)


def cmd_filter(args) -> int:
    method = FilterMethod.parse(args.method, m=args.m, folds=args.folds, seed=args.seed)
    if args.input_kind == "matrix":
        labels, c = read_matrix_csv(args.input)
        if method.tag is Method.HCAL:
            filtered = hcal_filter(c)
        elif method.tag is Method.SAMPLE:
            filtered = c
        else:
            raise ConfigError("a correlation-matrix input supports only --method hcal or sample")
        if args.cov_output:
            raise ConfigError("--cov-output needs returns or prices input")
        _write_matrix(args.output, filtered, labels)
        print(f"min_eigenvalue_corr {min_eigenvalue(filtered)!r}")
        print(f"frobenius_corr_to_input {frobenius_corr(filtered - c)!r}")
        return EXIT_OK

    r = _load_returns(args.input, args.input_kind)
    cov, corr = apply_filter(method, r)
    _write_matrix(args.output, corr, r.labels)
    print(f"min_eigenvalue_corr {min_eigenvalue(corr)!r}")
    print(f"frobenius_corr_to_sample {frobenius_corr(corr - sample_correlation(r))!r}")
    if args.cov_output:
        _write_matrix(args.cov_output, cov, r.labels)
        print(f"min_eigenvalue_cov {min_eigenvalue(cov)!r}")
        print(f"frobenius_cov_to_sample {frobenius_cov(cov - sample_covariance(r))!r}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    methods = _methods(args)
    metrics = _str_list(args.metrics) if args.metrics else list(METRICS)
    if args.synthetic == (args.input is not None):
        raise ConfigError("give exactly one of --input PRICES.csv or --synthetic")
    if args.synthetic:
        data = SyntheticConfig(
            depth=args.depth,
            rho_levels=tuple(_float_list(args.rho_levels)),
            vol_low=args.vol_low,
            vol_high=args.vol_high,
            seed=args.seed,
        )
    else:
        data = read_price_csv(args.input)
    t_grid = _int_list(args.t_in)
    if not t_grid:
        raise ConfigError("empty --t-in grid")

    records = []
    for t_in in t_grid:
        spec = SimulationSpec(
            t_in=t_in,
            t_out=args.t_out,
            n_assets=args.n_assets,
            n_sims=args.n_sims,
            seed=args.seed,
            methods=tuple(methods),
            metrics=tuple(metrics),
            earliest_out_date=args.earliest_out_date,
        )
        records.extend(run_experiment(spec, data, threads=args.threads))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.ndjson", "w") as fh:
        write_records(fh, records)
    rows = summarize(records)
    with open(out / "summary.csv", "w", newline="") as fh:
        write_summary(fh, rows)
    n_na = sum(r.value is None for r in records)
    print(f"wrote {len(records)} records ({n_na} NA) and {len(rows)} summary rows to {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    r_in = _load_returns(args.in_sample, args.input_kind)
    r_out = _load_returns(args.out_sample, args.input_kind)
    if r_in.labels != r_out.labels:
        raise DataError("in- and out-of-sample files must list the same assets in the same order")
    cov_out = sample_covariance(r_out)
    try:
        corr_out = sample_correlation(r_out)
    except BahcError:
        corr_out = None
    metrics = _str_list(args.metrics) if args.metrics else list(METRICS)
    results = []
    for method in _methods(args):
        try:
            cov, corr = apply_filter(method, r_in)
        except BahcError as exc:
            results.extend(
                {"method": method.label, "metric": m, "value": None, "note": str(exc)} for m in metrics
            )
            continue
        for m in metrics:
            try:
                value, note = score_metric(m, cov, corr, cov_out, corr_out), None
            except BahcError as exc:
                value, note = None, f"{type(exc).__name__}: {exc}"
            results.append({"method": method.label, "metric": m, "value": value, "note": note})
    text = json.dumps(results, indent=1)
    if args.output:
        Path(args.output).write_text(text + "\n")
    for row in results:
        shown = "NA" if row["value"] is None else f"{row['value']:.6g}"
        print(f"{row['method']:8s} {row['metric']:24s} {shown}")
    return EXIT_OK


def cmd_synth(args) -> int:
    levels = _float_list(args.rho_levels)
    r, c_true = synth_hierarchical(args.n, args.t, args.depth, levels, args.seed, args.vol)
    width = len(str(args.t))
    dates = [f"d{k:0{width}d}" for k in range(args.t + 1)]
    tickers = [f"A{i:0{len(str(args.n))}d}" for i in range(args.n)]
    if args.returns:
        with open(args.output, "w", newline="") as fh:
            write_returns_csv(fh, ReturnsMatrix(r.data, tickers), dates[1:])
    else:
        growth = 1.0 + r.data
        if np.any(growth <= 0):
            raise DataError("a simulated return is <= -100%; lower --vol")
        prices = 100.0 * np.cumprod(np.column_stack((np.ones(args.n), growth)), axis=1)
        with open(args.output, "w", newline="") as fh:
            write_price_csv(fh, PriceSeries(dates, prices, tickers))
    if args.truth:
        _write_matrix(args.truth, c_true, tickers)
    return EXIT_OK


def cmd_dendro(args) -> int:
    if args.input_kind == "matrix":
        labels, c = read_matrix_csv(args.input)
    else:
        r = _load_returns(args.input, args.input_kind)
        labels, c = list(r.labels), sample_correlation(r)
    dend = average_linkage(correlation_to_distance(c))
    if args.table:
        with open(args.table, "w") as fh:
            dend.write_table(fh)
    else:
        dend.write_table(sys.stdout)
    if args.cophenetic:
        _write_matrix(args.cophenetic, cophenetic_matrix(dend), labels)
    return EXIT_OK


def _add_method_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="number of bootstrap copies for BAHC (default 100)")
    p.add_argument("--folds", type=int, help="number of CV folds (default 10)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bahc", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML file with default settings")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    kinds = ("returns", "prices", "matrix")

    p = sub.add_parser("filter", help="filter a correlation/covariance estimate")
    p.add_argument("input")
    p.add_argument("--method", help="sample, hcal, bahc, lw or cv (default bahc)")
    p.add_argument("--input-kind", choices=kinds)
    p.add_argument("-o", "--output", help="correlation matrix CSV (default filtered_corr.csv)")
    p.add_argument("--cov-output", help="also write the covariance matrix here")
    _add_method_options(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("backtest", help="windowed minimum-variance and spectral experiments")
    p.add_argument("--input", help="wide price CSV")
    p.add_argument("--synthetic", action="store_true", default=None, help="use nested-block synthetic data")
    p.add_argument("--t-in", help="comma-separated calibration lengths")
    p.add_argument("--t-out", type=int)
    p.add_argument("--n-assets", type=int)
    p.add_argument("--n-sims", type=int)
    p.add_argument("--methods", help="e.g. 'bahc,lw,cv' or 'bahc:m=50;cv:folds=5'")
    p.add_argument("--metrics", help=f"subset of {','.join(METRICS)}")
    p.add_argument("--earliest-out-date", help="first out-of-sample date must be >= this label")
    p.add_argument("--depth", type=int)
    p.add_argument("--rho-levels")
    p.add_argument("--vol-low", type=float)
    p.add_argument("--vol-high", type=float)
    p.add_argument("--threads", type=int, help="worker processes (default 1)")
    p.add_argument("--out-dir", help="directory for records.ndjson and summary.csv")
    _add_method_options(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("diagnose", help="oracle, residue and Frobenius metrics for one split")
    p.add_argument("in_sample")
    p.add_argument("out_sample")
    p.add_argument("--input-kind", choices=kinds[:2])
    p.add_argument("--methods")
    p.add_argument("--metrics")
    p.add_argument("-o", "--output", help="JSON results file")
    _add_method_options(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("synth", help="generate a nested-block synthetic dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--rho-levels")
    p.add_argument("--vol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--returns", action="store_true", default=None, help="write returns instead of prices")
    p.add_argument("--truth", help="also write the population correlation matrix")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dendro", help="average-linkage table and cophenetic matrix")
    p.add_argument("input")
    p.add_argument("--input-kind", choices=kinds)
    p.add_argument("--table", help="linkage table path (default stdout)")
    p.add_argument("--cophenetic", help="cophenetic matrix CSV")
    p.set_defaults(func=cmd_dendro)
    return parser


DEFAULTS: dict[str, dict[str, Any]] = {
    "*": {"seed": 0, "m": 100, "folds": 10, "input_kind": "returns"},
    "filter": {"method": "bahc", "output": "filtered_corr.csv"},
    "backtest": {
        "t_in": "50,100,200",
        "t_out": 42,
        "n_assets": 100,
        "n_sims": 100,
        "methods": "bahc,hcal,lw,cv,sample",
        "depth": 4,
        "rho_levels": "0.6,0.45,0.3,0.15",
        "vol_low": 0.01,
        "vol_high": 0.03,
        "threads": 1,
        "out_dir": "results",
        "synthetic": False,
    },
    "diagnose": {"methods": "sample,hcal,bahc,lw,cv"},
    "synth": {
        "n": 100,
        "t": 1000,
        "depth": 4,
        "rho_levels": "0.6,0.45,0.3,0.15",
        "vol": 0.01,
        "output": "synthetic_prices.csv",
        "returns": False,
    },
}


def _load_config(path: str | None, command: str) -> dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    merged = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    merged.update(raw.get(command, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config = _load_config(args.config, args.command)
    defaults = {**DEFAULTS["*"], **DEFAULTS.get(args.command, {})}
    for key in set(defaults) | set(config):
        if getattr(args, key, None) is None:
            if key in config:
                setattr(args, key, config[key])
            elif key in defaults:
                setattr(args, key, defaults[key])
    return args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = _resolve(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"bahc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"bahc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"bahc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

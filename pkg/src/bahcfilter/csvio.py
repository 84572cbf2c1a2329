"""Plain-text readers and writers for returns tables and square matrices."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Sequence, TextIO, Union

import numpy as np
from numpy.typing import NDArray

from .errors import DataError
from .matrices import ReturnsMatrix

log = logging.getLogger(__name__)

Source = Union[str, Path, TextIO]


def _rows(source: Source) -> list[list[str]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return [r for r in csv.reader(fh) if r]
    return [r for r in csv.reader(source) if r]


def read_wide_csv(source: Source) -> tuple[list[str], list[str], NDArray[np.float64]]:
    """``(row labels, column labels, values)`` of a table whose first column holds labels.

    Empty cells become NaN.
    """
    rows = _rows(source)
    if len(rows) < 2 or len(rows[0]) < 2:
        raise DataError("CSV needs a header row and at least one data row")
    header = rows[0][1:]
    labels, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header) + 1:
            raise DataError(f"line {lineno}: expected {len(header) + 1} cells, got {len(row)}")
        labels.append(row[0])
        try:
            values.append([float(x) if x.strip() else math.nan for x in row[1:]])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return labels, header, np.array(values, dtype=np.float64)


def read_returns_csv(source: Source) -> ReturnsMatrix:
    """Returns in the price-table layout (dates down, tickers across).

    Assets with any missing value are dropped with a warning.
    """
    _, tickers, values = read_wide_csv(source)
    x = values.T
    keep = np.all(np.isfinite(x), axis=1)
    if not keep.all():
        dropped = [t for t, k in zip(tickers, keep) if not k]
        log.warning("dropping %d assets with missing values: %s", len(dropped), ", ".join(dropped))
    return ReturnsMatrix(x[keep], [t for t, k in zip(tickers, keep) if k])


def write_returns_csv(fh: TextIO, r: ReturnsMatrix, dates: Sequence[str] | None = None) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["date", *r.labels])
    dates = dates if dates is not None else [str(k) for k in range(r.t)]
    for d, col in zip(dates, r.data.T):
        writer.writerow([d, *(repr(float(x)) for x in col)])


def read_matrix_csv(source: Source) -> tuple[list[str], NDArray[np.float64]]:
    labels, header, values = read_wide_csv(source)
    if values.shape[0] != values.shape[1]:
        raise DataError(f"matrix CSV is not square: {values.shape}")
    if labels != header:
        raise DataError("matrix CSV row labels do not match the header")
    if not np.all(np.isfinite(values)):
        raise DataError("matrix CSV has missing or non-finite entries")
    return labels, values


def write_matrix_csv(fh: TextIO, m: NDArray[np.float64], labels: Sequence[str]) -> None:
    """Full-precision (round-trip) square matrix with labelled rows and columns."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["", *labels])
    for lab, row in zip(labels, m):
        writer.writerow([lab, *(repr(float(x)) for x in row)])

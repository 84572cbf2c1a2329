"""Bootstrapped average hierarchical clustering (BAHC) estimators.

Each bootstrap copy resamples the feature (column) indices with replacement,
jointly for all rows.  The copy's Pearson correlation is HCAL-filtered, and
the filtered matrices are averaged.  The covariance version rescales each
filtered correlation by the copy's own volatilities before averaging.

Random draws use numpy's counter-based Philox generator keyed by
``SeedSequence(seed, spawn_key=(b,))``, so copy ``b`` depends only on
``(seed, b, t)`` and copies can be computed in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DegenerateBootstrap
from .hierclust import hcal_filter
from .matrices import ReturnsLike, ReturnsMatrix, as_returns

__all__ = [
    "BootstrapSpec",
    "bootstrap_indices",
    "bootstrap_columns",
    "bahc_filter",
    "bahc_correlation",
    "bahc_covariance",
    "bootstrap_average",
    "MAX_REDRAWS",
]

Array = NDArray[np.float64]

MAX_REDRAWS = 100


@dataclass(frozen=True)
class BootstrapSpec:
    m: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"number of bootstraps must be a positive integer, got {self.m!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def bootstrap_indices(spec: BootstrapSpec, b: int, t: int, redraw: int = 0) -> NDArray[np.int64]:
    """Column indices of bootstrap copy ``b`` (1-based), ``redraw``-th attempt."""
    key = (b,) if redraw == 0 else (b, redraw)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed, spawn_key=key)))
    return rng.integers(0, t, size=t)


def bootstrap_columns(r, spec: BootstrapSpec, b: int, redraw: int = 0) -> Array:
    """Bootstrap copy ``b`` of a returns matrix (rows resampled jointly)."""
    if not 1 <= b <= spec.m:
        raise ConfigError(f"bootstrap index {b} outside 1..{spec.m}")
    x = r.data if isinstance(r, ReturnsMatrix) else np.asarray(r, dtype=np.float64)
    return x[:, bootstrap_indices(spec, b, x.shape[1], redraw)]


def _draw(x: Array, spec: BootstrapSpec, b: int) -> Array:
    t = x.shape[1]
    for redraw in range(MAX_REDRAWS + 1):
        xb = x[:, bootstrap_indices(spec, b, t, redraw)]
        if not np.any(np.all(xb == xb[:, :1], axis=1)):
            return xb
    raise DegenerateBootstrap(b, MAX_REDRAWS)


def _copy_filters(xb: Array) -> tuple[Array, Array]:
    t = xb.shape[1]
    xc = xb - xb.mean(axis=1, keepdims=True)
    cov = xc @ xc.T / t
    var = np.diag(cov).copy()
    sd = np.sqrt(var)
    corr = cov / np.outer(sd, sd)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    filtered = hcal_filter(corr)
    return filtered, filtered * np.outer(sd, sd)


class _PairwiseSum:
    """Streaming pairwise summation of a sequence of arrays, in arrival order."""

    def __init__(self) -> None:
        self._stack: list[tuple[int, Array]] = []

    def add(self, a: Array) -> None:
        level, item = 0, a
        while self._stack and self._stack[-1][0] == level:
            _, prev = self._stack.pop()
            item = prev + item
            level += 1
        self._stack.append((level, item))

    def total(self) -> Array:
        items = [a for _, a in self._stack]
        acc = items[-1]
        for a in reversed(items[:-1]):
            acc = a + acc
        return acc


def bahc_filter(r: ReturnsLike, spec: BootstrapSpec = BootstrapSpec()) -> tuple[Array, Array]:
    """Return ``(covariance, correlation)`` BAHC estimates from the same bootstrap copies."""
    x = as_returns(r).data
    corr_sum, cov_sum = _PairwiseSum(), _PairwiseSum()
    for b in range(1, spec.m + 1):
        c_f, s_f = _copy_filters(_draw(x, spec, b))
        corr_sum.add(c_f)
        cov_sum.add(s_f)
    corr = corr_sum.total() / spec.m
    cov = cov_sum.total() / spec.m
    np.fill_diagonal(corr, 1.0)
    return 0.5 * (cov + cov.T), 0.5 * (corr + corr.T)


def bahc_correlation(r: ReturnsLike, spec: BootstrapSpec = BootstrapSpec()) -> Array:
    return bahc_filter(r, spec)[1]


def bahc_covariance(r: ReturnsLike, spec: BootstrapSpec = BootstrapSpec()) -> Array:
    return bahc_filter(r, spec)[0]


def bootstrap_average(matrices: Iterable[Array]) -> Array:
    """Order-fixed pairwise mean, exposed for callers that filter copies themselves."""
    acc = _PairwiseSum()
    k = 0
    for a in matrices:
        acc.add(a)
        k += 1
    if k == 0:
        raise ConfigError("no matrices to average")
    return acc.total() / k

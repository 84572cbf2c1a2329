"""Comparison filters and a uniform dispatcher over all estimators.

Besides BAHC the experiments compare against the raw sample estimator,
a single HCAL filter, Ledoit-Wolf linear shrinkage towards a scaled
identity, and cross-validated eigenvalue shrinkage.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .bootstrap import BootstrapSpec, bahc_filter
from .errors import ConfigError, DataError
from .hierclust import hcal_filter
from .matrices import (
    ReturnsLike,
    as_returns,
    eigendecompose,
    renormalize_correlation,
    sample_correlation,
    sample_covariance,
)

__all__ = [
    "Method",
    "FilterMethod",
    "lw_shrink",
    "cv_eigenvalue_shrink",
    "apply_filter",
]

Array = NDArray[np.float64]


class Method(str, enum.Enum):
    SAMPLE = "sample"
    HCAL = "hcal"
    BAHC = "bahc"
    LW = "lw"
    CV = "cv"


@dataclass(frozen=True)
class FilterMethod:
    """A filter and its settings.

    ``m`` and ``seed`` are used by BAHC, ``folds`` and ``seed`` by CV; the
    other estimators take no parameters.
    """

    tag: Method
    m: int = 100
    folds: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag", Method(self.tag))
        if self.tag is Method.BAHC:
            BootstrapSpec(self.m, self.seed)
        if self.tag is Method.CV and self.folds < 2:
            raise ConfigError(f"CV needs at least 2 folds, got {self.folds}")

    @property
    def label(self) -> str:
        return self.tag.value

    def with_seed(self, seed: int) -> "FilterMethod":
        return replace(self, seed=seed)

    @classmethod
    def parse(cls, text: str, **defaults) -> "FilterMethod":
        """Build from ``"bahc"`` or ``"bahc:m=50,seed=3"`` style strings."""
        name, _, opts = text.strip().partition(":")
        kwargs = dict(defaults)
        for item in filter(None, opts.split(",")):
            key, _, value = item.partition("=")
            if key not in ("m", "folds", "seed"):
                raise ConfigError(f"unknown method option {key!r} in {text!r}")
            kwargs[key] = int(value)
        try:
            tag = Method(name.lower())
        except ValueError:
            raise ConfigError(f"unknown method {name!r}") from None
        return cls(tag, **kwargs)


def lw_shrink(r: ReturnsLike, return_intensity: bool = False):
    """Ledoit-Wolf linear shrinkage of the sample covariance towards ``mu * I``.

    ``mu = trace(S) / n`` and the intensity ``delta = b^2 / d^2`` uses the
    normalised norm ``||A||^2 = trace(A A^T) / n``.  With
    ``return_intensity`` the result is ``(sigma, delta)``.
    """
    x = as_returns(r).data
    n, t = x.shape
    xc = x - x.mean(axis=1, keepdims=True)
    s = sample_covariance(x)
    mu = np.trace(s) / n
    target = mu * np.eye(n)
    d2 = np.sum((s - target) ** 2) / n
    if d2 == 0.0:
        delta = 0.0
    else:
        sq_norms = np.sum(xc * xc, axis=0)
        bbar2 = (np.sum(sq_norms**2) - t * np.sum(s * s)) / (n * t * t)
        b2 = min(max(bbar2, 0.0), d2)
        delta = float(np.clip(b2 / d2, 0.0, 1.0))
    if delta == 0.0:
        sigma = s.copy()
    elif delta == 1.0:
        sigma = target
    else:
        sigma = delta * target + (1.0 - delta) * s
    return (sigma, delta) if return_intensity else sigma


def _fold_columns(t: int, folds: int, seed: int) -> list[NDArray[np.int64]]:
    perm = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed))).permutation(t)
    return np.array_split(perm, folds)


def cv_eigenvalue_shrink(
    r: ReturnsLike, folds: int = 10, seed: int = 0, return_eigenvalues: bool = False
):
    """Cross-validated eigenvalue shrinkage.

    Columns are demeaned once over the full window, shuffled with ``seed`` and
    split into contiguous folds.  For each fold the eigenvectors of the
    training covariance score the held-out covariance; the averaged scores
    replace the full-sample eigenvalues rank by rank.
    """
    x = as_returns(r).data
    n, t = x.shape
    if folds < 2:
        raise ConfigError(f"CV needs at least 2 folds, got {folds}")
    if t < folds:
        raise DataError(f"cannot split {t} features into {folds} folds")
    xc = x - x.mean(axis=1, keepdims=True)
    full = eigendecompose(xc @ xc.T / t)

    z = np.zeros(n)
    for test in _fold_columns(t, folds, seed):
        train = np.setdiff1d(np.arange(t), test, assume_unique=True)
        xtr, xte = xc[:, train], xc[:, test]
        u_train = eigendecompose(xtr @ xtr.T / xtr.shape[1]).eigenvectors
        proj = u_train.T @ xte
        z += np.sum(proj * proj, axis=1) / xte.shape[1]
    z /= folds
    z = np.maximum(z, 1e-12 * z.mean())

    u = full.eigenvectors
    sigma = (u * z) @ u.T
    sigma = 0.5 * (sigma + sigma.T)
    return (sigma, z) if return_eigenvalues else sigma


def _hcal_pair(r: ReturnsLike) -> tuple[Array, Array]:
    s = sample_covariance(r)
    corr = hcal_filter(sample_correlation(r))
    sd = np.sqrt(np.diag(s))
    return corr * np.outer(sd, sd), corr


def apply_filter(method: FilterMethod, r: ReturnsLike) -> tuple[Array, Array]:
    """``(covariance, correlation)`` estimate of ``method`` on returns ``r``."""
    r = as_returns(r)
    tag = method.tag
    if tag is Method.SAMPLE:
        return sample_covariance(r), sample_correlation(r)
    if tag is Method.HCAL:
        return _hcal_pair(r)
    if tag is Method.BAHC:
        return bahc_filter(r, BootstrapSpec(method.m, method.seed))
    if tag is Method.LW:
        cov = lw_shrink(r)
    elif tag is Method.CV:
        cov = cv_eigenvalue_shrink(r, method.folds, method.seed)
    else:  # pragma: no cover - enum is exhaustive
        raise ConfigError(f"unsupported method {tag}")
    return cov, renormalize_correlation(cov)

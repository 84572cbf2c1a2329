"""Returns, covariance and correlation matrices: estimators, norms, spectra.

Matrices are plain ``float64`` numpy arrays; the small dataclasses below
carry the pieces that need validation or extra metadata.  Rows of a returns
matrix are objects (assets, tissues, ...) and columns are features (days).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DataError, NonpositiveDiagonal, NumericalError, ZeroVariance

__all__ = [
    "ReturnsMatrix",
    "EigenDecomposition",
    "as_returns",
    "sample_covariance",
    "sample_correlation",
    "renormalize_correlation",
    "eigendecompose",
    "frobenius_cov",
    "frobenius_corr",
    "psd_tolerance",
    "min_eigenvalue",
]

Array = NDArray[np.float64]


def _readonly(a: Array) -> Array:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ReturnsMatrix:
    """n objects by t features of finite observations."""

    data: Array
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"returns must be two-dimensional, got shape {data.shape}")
        n, t = data.shape
        if n < 2 or t < 2:
            raise DataError(f"need n >= 2 objects and t >= 2 features, got {n}x{t}")
        if not np.all(np.isfinite(data)):
            bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
            raise DataError(f"rows with missing or non-finite values: {bad.tolist()}")
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(n))
        if len(labels) != n:
            raise DataError(f"{len(labels)} labels for {n} rows")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def t(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_rows(cls, rows: ArrayLike, labels: Sequence[str] = ()) -> "ReturnsMatrix":
        return cls(np.asarray(rows, dtype=np.float64), tuple(labels))


ReturnsLike = Union[ReturnsMatrix, ArrayLike]


def as_returns(r: ReturnsLike) -> ReturnsMatrix:
    return r if isinstance(r, ReturnsMatrix) else ReturnsMatrix(np.asarray(r, dtype=np.float64))


def psd_tolerance(m: Array, scale: float = 1e-10) -> float:
    """Tolerance for "min eigenvalue >= -tol" checks, proportional to trace/n."""
    n = m.shape[0]
    return scale * abs(float(np.trace(m))) / n


def min_eigenvalue(m: Array) -> float:
    return float(np.linalg.eigvalsh(m)[0])


def sample_covariance(r: ReturnsLike) -> Array:
    """Covariance with divisor ``t`` (the maximum-likelihood normalisation).

    Each row is demeaned over the window it is given; the estimator is
    therefore biased by a factor ``(t - 1) / t`` relative to ``np.cov``.
    """
    x = as_returns(r).data
    xc = x - x.mean(axis=1, keepdims=True)
    cov = xc @ xc.T / x.shape[1]
    # mirror so symmetry is exact, not just up to rounding of the product
    cov = np.triu(cov) + np.triu(cov, 1).T
    return cov


def _correlation_from_cov(cov: Array) -> Array:
    var = np.diag(cov).copy()
    bad = np.flatnonzero(var <= 0)
    if bad.size:
        raise ZeroVariance(int(bad[0]))
    sd = np.sqrt(var)
    corr = cov / np.outer(sd, sd)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def sample_correlation(r: ReturnsLike) -> Array:
    """Pearson correlation; raises :class:`ZeroVariance` naming a constant row."""
    x = as_returns(r).data
    # a constant row can leave a rounding-level variance instead of an exact 0
    const = np.flatnonzero(np.all(x == x[:, :1], axis=1))
    if const.size:
        raise ZeroVariance(int(const[0]))
    return _correlation_from_cov(sample_covariance(x))


def renormalize_correlation(c: ArrayLike) -> Array:
    """Rescale ``c_ij -> c_ij / sqrt(c_ii c_jj)`` so the diagonal is exactly one."""
    c = np.asarray(c, dtype=np.float64)
    d = np.diag(c)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NonpositiveDiagonal(int(bad[0]), float(d[bad[0]]))
    s = np.sqrt(d)
    out = c / np.outer(s, s)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending and matching orthonormal eigenvector columns."""

    eigenvalues: Array
    eigenvectors: Array

    def reconstruct(self) -> Array:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def eigendecompose(m: ArrayLike) -> EigenDecomposition:
    """Symmetric eigendecomposition with a deterministic sign convention.

    Every eigenvector is flipped so that its largest-magnitude component is
    positive (the first such component on exact ties).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"expected a square matrix, got shape {m.shape}")
    try:
        w, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        finite = bool(np.all(np.isfinite(m)))
        norm = float(np.linalg.norm(m)) if finite else float("nan")
        raise NumericalError(
            f"eigendecomposition failed ({exc}); finite={finite}, frobenius norm={norm:.3e}"
        ) from exc
    w = w[::-1].copy()
    u = u[:, ::-1].copy()
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    return EigenDecomposition(_readonly(w), _readonly(u))


def frobenius_cov(x: ArrayLike) -> float:
    """Root mean square of all entries, diagonal included."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    return float(np.sqrt(np.sum(x * x) / n**2))


def frobenius_corr(x: ArrayLike) -> float:
    """Root mean square of the off-diagonal entries; the diagonal is ignored."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DataError("frobenius_corr needs n >= 2")
    il = np.tril_indices(n, -1)
    lower = x[il]
    return float(np.sqrt(2.0 * np.sum(lower * lower) / (n * (n - 1))))

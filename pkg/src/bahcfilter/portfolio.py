"""Global minimum-variance portfolios and their realized risk."""

from __future__ import annotations

import csv
from typing import Sequence, TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceError, DataError, SingularCovariance

__all__ = [
    "min_variance_long_short",
    "min_variance_long_only",
    "realized_risk",
    "project_to_simplex",
    "kkt_residual",
    "write_weights",
]

Array = NDArray[np.float64]


def _check_square(sigma: Array) -> Array:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DataError(f"expected a square covariance matrix, got shape {sigma.shape}")
    return 0.5 * (sigma + sigma.T)


def min_variance_long_short(sigma: ArrayLike) -> Array:
    """Weights ``S^-1 1 / (1^T S^-1 1)``.

    Raises :class:`SingularCovariance` when the smallest eigenvalue is not
    above ``n * eps * lambda_max``, e.g. for a raw sample covariance with
    more assets than observations.
    """
    sigma = _check_square(sigma)
    n = sigma.shape[0]
    eig = np.linalg.eigvalsh(sigma)
    lo, hi = float(eig[0]), float(eig[-1])
    if not hi > 0 or lo <= n * np.finfo(float).eps * hi:
        raise SingularCovariance(lo, hi)
    x = np.linalg.solve(sigma, np.ones(n))
    return x / x.sum()


def project_to_simplex(v: ArrayLike) -> Array:
    """Euclidean projection onto ``{w >= 0, sum w = 1}``."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _equality_qp(sigma: Array, free: NDArray[np.bool_]) -> Array:
    """Minimise ``w' S w`` with ``sum w = 1`` and ``w = 0`` outside ``free``."""
    idx = np.flatnonzero(free)
    k = len(idx)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * sigma[np.ix_(idx, idx)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    w = np.zeros(sigma.shape[0])
    w[idx] = sol[:k]
    return w


def _gradient_scale(sigma: Array, g: Array) -> float:
    # the gradient vanishes at a zero-variance optimum, so floor by the matrix scale
    return max(float(np.max(np.abs(g))), 2.0 * float(np.max(np.abs(np.diag(sigma)))), np.finfo(float).tiny)


def kkt_residual(sigma: ArrayLike, w: ArrayLike) -> float:
    """Largest violation of the long-only optimality conditions, relative to the gradient scale."""
    sigma = np.asarray(sigma, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    g = 2.0 * sigma @ w
    active = w > 0
    nu = float(np.mean(g[active])) if active.any() else 0.0
    scale = _gradient_scale(sigma, g)
    spread = np.max(np.abs(g[active] - nu)) if active.any() else 0.0
    below = np.max(np.maximum(nu - g[~active], 0.0)) if (~active).any() else 0.0
    infeas = max(abs(w.sum() - 1.0), float(np.max(np.maximum(-w, 0.0))))
    return float(max(spread, below) / scale + infeas)


def min_variance_long_only(sigma: ArrayLike, tol: float = 1e-10) -> Array:
    """Minimum-variance weights with ``w >= 0`` by a primal active-set method.

    The start is the simplex projection of the long-short solution (uniform
    weights when the latter does not exist).  At most ``10 n`` iterations are
    taken; on failure :class:`ConvergenceError` carries the best feasible
    iterate and its KKT residual.
    """
    sigma = _check_square(sigma)
    n = sigma.shape[0]
    try:
        w = project_to_simplex(min_variance_long_short(sigma))
    except SingularCovariance:
        w = np.full(n, 1.0 / n)
    free = w > 0

    for _ in range(max(10 * n, 10)):
        target = _equality_qp(sigma, free)
        step = target - w
        blocking = free & (step < 0) & (target < 0)
        if not blocking.any():
            w = np.where(free, target, 0.0)
            g = 2.0 * sigma @ w
            nu = float(np.mean(g[free]))
            mult = np.where(free, np.inf, g - nu)
            worst = int(np.argmin(mult))
            scale = _gradient_scale(sigma, g)
            if mult[worst] >= -tol * scale:
                w = np.maximum(w, 0.0)
                return w / w.sum()
            free[worst] = True
        else:
            ratios = np.where(blocking, w / np.where(blocking, -step, 1.0), np.inf)
            j = int(np.argmin(ratios))
            w = w + ratios[j] * step
            w[j] = 0.0
            free[j] = False
    w = np.maximum(w, 0.0)
    w /= w.sum()
    raise ConvergenceError(
        "long-only active-set solver hit its iteration cap", best=w, residual=kkt_residual(sigma, w)
    )


def realized_risk(w: ArrayLike, sigma_out: ArrayLike) -> float:
    """Portfolio standard deviation ``sqrt(w' S_out w)``."""
    w = np.asarray(w, dtype=np.float64)
    sigma_out = np.asarray(sigma_out, dtype=np.float64)
    if sigma_out.shape != (len(w), len(w)):
        raise DataError(f"weights of length {len(w)} do not match covariance {sigma_out.shape}")
    return float(np.sqrt(max(float(w @ sigma_out @ w), 0.0)))


def write_weights(fh: TextIO, w: ArrayLike, asset_ids: Sequence[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["asset_id", "weight"])
    for a, x in zip(asset_ids, np.asarray(w, dtype=np.float64)):
        writer.writerow([a, repr(float(x))])

"""Oracle estimator, eigenvalue residues and eigenvector-stability diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DataError, NonpositiveEigenvalue
from .matrices import EigenDecomposition, frobenius_corr, frobenius_cov

__all__ = ["OracleResult", "oracle", "residues", "eigenvector_stability"]

Array = NDArray[np.float64]


@dataclass(frozen=True)
class OracleResult:
    oracle_eigenvalues: Array
    oracle_matrix: Array
    basis: EigenDecomposition


def oracle(basis: EigenDecomposition, m_out: ArrayLike) -> OracleResult:
    """Best approximation of ``m_out`` that is diagonal in ``basis``.

    ``z_i = u_i' M_out u_i`` and the estimator is ``U diag(z) U'``; no other
    choice of diagonal is closer to ``m_out`` in Frobenius norm.
    """
    m_out = np.asarray(m_out, dtype=np.float64)
    u = basis.eigenvectors
    if m_out.shape != (u.shape[0], u.shape[0]):
        raise DataError(f"basis of size {u.shape[0]} does not match matrix {m_out.shape}")
    z = np.einsum("ij,ij->j", u, m_out @ u)
    xi = (u * z) @ u.T
    return OracleResult(z, 0.5 * (xi + xi.T), basis)


def residues(lam: ArrayLike, z: ArrayLike) -> tuple[float, float]:
    """RMS gaps ``(eps_hi, eps_low)`` between eigenvalues and their inverses.

    Both sequences are sorted in descending order before being paired by
    rank.  If any value is non-positive the inverse residue is undefined and
    :class:`NonpositiveEigenvalue` is raised with ``eps_hi`` attached.
    """
    lam = np.sort(np.asarray(lam, dtype=np.float64))[::-1]
    z = np.sort(np.asarray(z, dtype=np.float64))[::-1]
    if lam.shape != z.shape:
        raise DataError(f"eigenvalue vectors differ in length: {lam.shape} vs {z.shape}")
    eps_hi = float(np.sqrt(np.mean((lam - z) ** 2)))
    if np.any(lam <= 0) or np.any(z <= 0):
        raise NonpositiveEigenvalue(eps_hi)
    eps_low = float(np.sqrt(np.mean((1.0 / lam - 1.0 / z) ** 2)))
    return eps_hi, eps_low


def eigenvector_stability(
    basis: EigenDecomposition,
    m_out: ArrayLike,
    mode: Literal["covariance", "correlation"] = "correlation",
) -> float:
    """Distance between ``m_out`` and its oracle estimator in ``basis``."""
    m_out = np.asarray(m_out, dtype=np.float64)
    diff = m_out - oracle(basis, m_out).oracle_matrix
    if mode == "correlation":
        return frobenius_corr(diff)
    if mode == "covariance":
        return frobenius_cov(diff)
    raise DataError(f"mode must be 'covariance' or 'correlation', got {mode!r}")

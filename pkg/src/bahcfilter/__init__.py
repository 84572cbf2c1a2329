"""Bootstrapped average hierarchical clustering (BAHC) filtering of
correlation and covariance matrices, with baseline filters, minimum-variance
portfolios and spectral diagnostics."""

from .baselines import FilterMethod, Method, apply_filter, cv_eigenvalue_shrink, lw_shrink
from .bootstrap import BootstrapSpec, bahc_correlation, bahc_covariance, bahc_filter, bootstrap_columns
from .hierclust import (
    Dendrogram,
    average_linkage,
    cophenetic_correlation,
    cophenetic_matrix,
    correlation_to_distance,
    hcal_filter,
)
from .matrices import (
    EigenDecomposition,
    ReturnsMatrix,
    eigendecompose,
    frobenius_corr,
    frobenius_cov,
    renormalize_correlation,
    sample_correlation,
    sample_covariance,
)
from .portfolio import min_variance_long_only, min_variance_long_short, realized_risk
from .spectral import OracleResult, eigenvector_stability, oracle, residues

__version__ = "0.1.0"

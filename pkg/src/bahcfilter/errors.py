"""Exception types shared across the package.

The CLI maps :class:`DataError` to exit code 3 and :class:`NumericalError`
to exit code 4; anything raised as :class:`ConfigError` becomes exit code 2.
"""

from __future__ import annotations


class BahcError(Exception):
    """Base class for all package errors."""


class ConfigError(BahcError, ValueError):
    """Invalid or inconsistent parameters."""


class DataError(BahcError, ValueError):
    """Input data violates a precondition (shape, gaps, nonpositive prices...)."""


class NumericalError(BahcError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class ZeroVariance(DataError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero sample variance")
        self.row = row


class NonpositiveDiagonal(DataError):
    def __init__(self, index: int, value: float):
        super().__init__(f"diagonal entry {index} is not positive ({value!r})")
        self.index = index
        self.value = value


class DegenerateBootstrap(NumericalError):
    def __init__(self, b: int, retries: int):
        super().__init__(
            f"bootstrap {b} kept producing a zero-variance row after {retries} redraws"
        )
        self.b = b
        self.retries = retries


class SingularCovariance(NumericalError):
    def __init__(self, min_eig: float, max_eig: float):
        cond = float("inf") if min_eig <= 0 else max_eig / min_eig
        super().__init__(
            f"covariance is singular or ill-conditioned "
            f"(min eig {min_eig:.3e}, max eig {max_eig:.3e}, condition {cond:.3e})"
        )
        self.min_eig = min_eig
        self.max_eig = max_eig
        self.condition = cond


class NonpositiveEigenvalue(NumericalError):
    """Raised by the low-eigenvalue residue; ``eps_hi`` is still available."""

    def __init__(self, eps_hi: float):
        super().__init__("eps_low undefined: a non-positive eigenvalue is present")
        self.eps_hi = eps_hi


class ConvergenceError(NumericalError):
    def __init__(self, message: str, best=None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual

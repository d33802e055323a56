"""Exception types shared across the package."""


class SpectrumFormatError(ValueError):
    """Raised when a spectrum file cannot be parsed; the message names the offending line."""


class ConvergenceError(RuntimeError):
    """Raised when the self-consistent solver fails to converge.

    Carries the last iterate so callers can inspect how close the solve got.
    """

    def __init__(self, message, z=None, last_kappa=None, residual=None, iterations=None):
        super().__init__(message)
        self.z = z
        self.last_kappa = last_kappa
        self.residual = residual
        self.iterations = iterations


class OutOfRegimeError(ValueError):
    """Raised when an asymptotic variance formula is evaluated outside its
    validity region (sample count not above the effective degrees of freedom)."""


class SingularMatrixError(ValueError):
    """Raised when an operation requires a numerically full-rank matrix but got one that is not."""

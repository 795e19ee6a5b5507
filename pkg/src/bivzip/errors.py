"""Exception hierarchy shared across the package."""


class BivZipError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(BivZipError, ValueError):
    """Intensity parameters outside their valid domain."""


class MixtureDomainError(BivZipError, ValueError):
    """Mixture probabilities invalid (out of [0,1] or not summing to 1)."""


class BasisDegeneracyError(BivZipError, ValueError):
    """Covariate cannot support a spline basis (e.g. constant column)."""


class SingularSystemError(BivZipError, ValueError):
    """A linear system required by a fit is rank deficient."""


class EncodingError(BivZipError, ValueError):
    """Categorical encoding failure (unseen level, bad baseline)."""


class SpecError(BivZipError, ValueError):
    """Invalid model or truth specification."""


class TableError(BivZipError, ValueError):
    """Input data table fails validation."""


class ChainDivergenceError(BivZipError, RuntimeError):
    """Non-finite state detected during sampling."""

    def __init__(self, iteration, block, message=""):
        self.iteration = iteration
        self.block = block
        super().__init__(
            message or f"non-finite state in block '{block}' at iteration {iteration}"
        )


class DiagnosticsError(BivZipError, ValueError):
    """Diagnostics requested on unusable chain output."""

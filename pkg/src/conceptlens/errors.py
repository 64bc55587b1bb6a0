"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration errors exit 2, data
errors exit 3, provider errors exit 4.
"""


class ConceptLensError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ConceptLensError):
    """Invalid parameters or an inconsistent run configuration."""


class DataError(ConceptLensError):
    """Malformed or inconsistent input data (corpora, annotations)."""


class PreconditionError(ConceptLensError, ValueError):
    """A documented operation precondition was violated by the caller."""


class MatrixFormatError(DataError):
    """A matrix file could not be parsed; the message names the offending field."""


class NonNegativityViolation(ConceptLensError):
    """An activation matrix contains negative entries.

    Fatal for concept-discovery pipelines: the factorization requires
    elementwise non-negative inputs.
    """


class ProviderError(ConceptLensError):
    """An embedding provider failed or is unreachable."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries

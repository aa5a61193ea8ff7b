"""Exception types shared across the package."""


class ProcnoiseError(Exception):
    """Base class for all package errors."""


class DegenerateField(ProcnoiseError):
    """Raised when a noise field has zero global RMS and cannot be normalized."""


class DimensionMismatch(ProcnoiseError):
    """Image / perturbation shapes do not agree."""


class BadWindow(ProcnoiseError):
    """Invalid median-filter window (even, too small, or larger than the image)."""


class IoError(ProcnoiseError):
    """File could not be read or written."""


class UnsupportedFormat(ProcnoiseError):
    """Image file is not an 8-bit RGB PNG."""


class BudgetExhausted(ProcnoiseError):
    """The query ledger has no budget left. The failed call spends nothing."""


class TransportError(ProcnoiseError):
    """Remote or subprocess oracle is unreachable or returned a malformed reply."""


class EmptyDataset(ProcnoiseError):
    """Metric requested over an empty dataset or perturbation set."""


class InsufficientTopK(ProcnoiseError):
    """Verdicts do not carry enough ranked labels for the requested metric."""


class NoCleanCorrectInputs(ProcnoiseError):
    """Success statistics are undefined: every input was already misclassified clean."""


class DegenerateColumn(ProcnoiseError):
    """Correlation input is unusable (fewer than 3 rows)."""


class IllConditioned(ProcnoiseError):
    """Covariance factorization failed even after noise inflation."""


class ManifestError(ProcnoiseError):
    """Dataset manifest is missing, malformed, or inconsistent with the oracle."""


class TransportAborted(TransportError):
    """A transport failure aborted a run; partial artifacts are attached."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial

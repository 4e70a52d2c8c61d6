"""Exception hierarchy shared by every stage of the pipeline."""


class FuseError(Exception):
    """Base class for recoverable pipeline failures.

    ``run_fuse`` catches these per block and falls back to the naive ensemble.
    """


class InsufficientSamplesError(FuseError):
    pass


class InsufficientVerifiersError(FuseError):
    pass


class DegenerateError(FuseError):
    """Raised when an estimate is undefined (zero spectrum, zero margins, ...)."""


class AssumptionViolation(FuseError):
    """No verifier looks better than random, so sign identification fails."""


class ConvergenceError(FuseError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DatasetError(Exception):
    """Malformed or inconsistent input data."""


class ParseError(DatasetError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateError(DatasetError):
    pass


class ShapeError(DatasetError):
    pass


class UnavailableBaselineError(Exception):
    """A baseline's data requirements (labels, answer keys) are not met."""


class PartialResultsError(Exception):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class ConfigError(Exception):
    pass

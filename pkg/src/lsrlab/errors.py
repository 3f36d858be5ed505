"""Exception types shared across the package."""


class LsrError(Exception):
    """Base class for all lsrlab errors."""


class DataError(LsrError):
    """Malformed or unusable input data (bad files, empty corpora, invariant violations)."""


class DivergenceError(LsrError):
    """Training produced a non-finite loss or gradient."""

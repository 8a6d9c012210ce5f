from typing import Optional, Tuple


class TlidError(Exception):
    """Base error. ``code`` is the machine-parsable reason printed by the CLI."""

    default_code = "TLID"

    def __init__(self, message: str, code: Optional[str] = None):
        self.message = message
        self.code = code or self.default_code
        super().__init__(message)


class DomainError(TlidError, ValueError):
    default_code = "DOMAIN"


class UnsupportedOperationError(TlidError):
    default_code = "UNSUPPORTED"


class SingularMeanError(TlidError, ArithmeticError):
    default_code = "SINGULAR_MEAN"


class NoSolutionError(TlidError):
    default_code = "NO_SOLUTION"

    def __init__(self, message: str, excluded: Optional[Tuple[float, float]] = None):
        self.excluded = excluded
        super().__init__(message)


class SeriesError(TlidError, ArithmeticError):
    default_code = "SERIES"


class OrderMismatchError(SeriesError):
    default_code = "ORDER_MISMATCH"


class ZeroConstantTermError(SeriesError, ZeroDivisionError):
    default_code = "ZERO_CONSTANT_TERM"


class TruncationError(SeriesError):
    default_code = "TRUNCATION"


class NotSelfDecomposableError(TlidError):
    default_code = "NOT_SD"

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class DegenerateChainError(TlidError, ValueError):
    default_code = "DEGENERATE_CHAIN"


class InvalidClusterError(TlidError, ValueError):
    default_code = "INVALID_CLUSTER"


class ConfigurationError(TlidError, ValueError):
    default_code = "CONFIG"


class EmptyInputError(TlidError, ValueError):
    default_code = "EMPTY_INPUT"


class InsufficientDataError(TlidError, ValueError):
    default_code = "INSUFFICIENT_DATA"


class DegenerateFitError(TlidError, ValueError):
    default_code = "DEGENERATE_FIT"

"""Exception types shared across the package."""


class CvrpcutError(Exception):
    """Base class for all package errors."""


class ParseError(CvrpcutError):
    """Raised when an input file or text blob cannot be parsed."""


class UnsupportedFormatError(ParseError):
    """Raised when a file is syntactically valid but uses an unsupported variant."""


class ValidationError(CvrpcutError):
    """Raised when parsed or constructed data violates a documented invariant."""


class SolverError(CvrpcutError):
    """Raised when the LP/MIP machinery reaches an inconsistent internal state."""

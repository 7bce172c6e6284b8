"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 2 (argparse),
data/format errors exit 3, numerical failures exit 4.
"""


class OodkitError(Exception):
    """Base class for toolkit errors."""


class BankFormatError(OodkitError):
    """Raised for malformed bank files: bad magic, unsupported version,
    truncated or oversized payload, non-finite entries."""


class DataError(OodkitError, ValueError):
    """Raised for invalid in-memory data: dimension mismatches, missing
    logits/labels/head, out-of-range parameters."""


class NumericalError(OodkitError, ArithmeticError):
    """Raised when a numerical procedure cannot complete, e.g. a covariance
    that stays singular after regularization."""

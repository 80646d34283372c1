"""Exception hierarchy shared across the toolkit.

Two broad families matter for the CLI exit codes: ``DataError`` covers
malformed or out-of-contract input (exit code 2), ``RuntimeFailure``
covers computational failures such as shape mismatches or divergence
(exit code 3).
"""


class MorphoQGError(Exception):
    """Base class for all toolkit errors."""


class DataError(MorphoQGError):
    """Invalid or malformed input data."""


class RuntimeFailure(MorphoQGError):
    """Computation failed at run time."""


# -- morphology ---------------------------------------------------------

class UnknownRuleError(MorphoQGError):
    """No inflection rule or irregular entry applies to the input."""


class ParseError(DataError):
    """Malformed row in a data file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateKeyError(DataError):
    """Conflicting entries for the same lookup key."""


# -- codec --------------------------------------------------------------

class EmptyInputError(DataError):
    """An operation received an empty token sequence."""


class CutoffExceeded(DataError):
    """Input sequence longer than the configured cutoff length."""


class DanglingTransError(DataError):
    """A transformation action with no preceding word to modify."""


# -- vocab analysis -----------------------------------------------------

class FileError(DataError):
    """A required file could not be read."""


# -- numeric core / model -----------------------------------------------

class ShapeMismatch(RuntimeFailure):
    """Operands with incompatible shapes."""

    def __init__(self, op, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class IndexOutOfVocab(RuntimeFailure):
    """An embedding lookup index is outside the table."""


class DivergenceError(RuntimeFailure):
    """Training loss became non-finite."""


# -- metrics ------------------------------------------------------------

class LengthMismatch(DataError):
    """Candidate and reference lists differ in length."""

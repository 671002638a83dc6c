"""Exception types shared across the package."""


class RubricAssessError(Exception):
    """Base class for every error raised by this package."""


class EmptyDocumentError(RubricAssessError):
    """A document to be segmented contained no text."""


class SchemaError(RubricAssessError):
    """A corpus record was malformed; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(RubricAssessError):
    """A value violated a documented invariant (bounds, uniqueness, references)."""


class ConfigError(RubricAssessError):
    """A configuration value or combination is invalid."""


class DimensionMismatchError(RubricAssessError):
    """Vector operands had incompatible lengths."""


class UnknownDimensionError(RubricAssessError):
    """A per-dimension head was asked about a dimension it was not trained on."""


class IncompleteReportError(RubricAssessError):
    """A report is missing predictions for one or more rubric dimensions."""


class UndefinedMetricError(RubricAssessError):
    """A metric could not be computed for any item (e.g. all inputs constant)."""


class ModeMismatchError(RubricAssessError):
    """A checkpoint was used in the wrong assessment mode (scored vs presence)."""

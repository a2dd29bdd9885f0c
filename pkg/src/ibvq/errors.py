"""Exception hierarchy shared by all ibvq modules.

Exit-code mapping used by the CLI: ConfigError/ValidationError and their
subclasses map to exit code 1, NumericError/TrainingError to exit code 2.
"""


class IbvqError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IbvqError, ValueError):
    """A configuration value is out of its documented range or unusable."""


class ValidationError(IbvqError, ValueError):
    """An input violates a documented precondition."""


class ShapeError(ValidationError):
    """Matrix or sequence dimensions do not agree."""


class AlignmentError(ValidationError):
    """Segment boundaries are inconsistent with the data they describe."""


class VocabularyError(ValidationError):
    """An identifier is not present in the closed vocabulary."""


class CodeRangeError(ValidationError, IndexError):
    """A discrete code index lies outside the codebook."""


class CorpusFormatError(ValidationError):
    """A corpus file on disk is malformed or missing."""


class CheckpointError(ValidationError):
    """A parameter checkpoint is malformed or truncated."""


class NumericError(IbvqError, ArithmeticError):
    """A non-finite value appeared where finite arithmetic is required."""


class TrainingError(NumericError):
    """Training diverged; carries the step index in the message."""

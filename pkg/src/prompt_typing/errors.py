"""Exception hierarchy shared across the package.

CLI exit codes map onto these groups: usage problems exit 2, data and
validation problems exit 3, backend capability problems exit 4.
"""


class PromptTypingError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PromptTypingError):
    """Malformed label schema: empty labels, duplicate ids, bad level names."""


class ConfigurationError(PromptTypingError):
    """Inconsistent or incomplete configuration of an operation."""


class RenderError(PromptTypingError):
    """A typing example cannot be rendered into a prompted input."""


class EncodeError(PromptTypingError):
    """The backend cannot encode a prompted input (e.g. out-of-vocabulary)."""


class CapabilityError(PromptTypingError):
    """The backend lacks a required capability (e.g. token registration)."""


class DataError(PromptTypingError):
    """Malformed dataset rows, unknown labels, or invalid splits."""


class DegenerateScoreError(PromptTypingError):
    """All type scores are zero; normalization would divide by zero."""


class TrainingError(PromptTypingError):
    """Training cannot proceed (degenerate batch, empty train set, ...)."""


class PairGenerationError(PromptTypingError):
    """The requested number of pairs cannot be generated from the corpus."""

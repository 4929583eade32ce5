"""Exception taxonomy for the kpe package.

Every error raised by the package derives from KpeError so callers can
catch the package's failures with a single except clause. Subclasses are
grouped by the module that raises them.
"""

from __future__ import annotations


class KpeError(Exception):
    """Base class for all kpe errors."""


# corpus ------------------------------------------------------------------

class FormatError(KpeError):
    """Malformed input file: bad encoding, column count, or field value."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateKeyError(KpeError):
    """Two records share a key that must be unique."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ReferentialError(KpeError):
    """A record points at a segment or system output that does not exist."""


class SelfComparisonError(KpeError):
    """A ranking judgment compares a system against itself."""


# prompting ---------------------------------------------------------------

class TemplateNotFoundError(KpeError):
    """Requested template id is not in the registry."""


class MissingBindingError(KpeError):
    """render was not given a value for one or more required placeholders."""

    def __init__(self, names: list[str]) -> None:
        super().__init__(f"missing bindings: {', '.join(sorted(names))}")
        self.names = tuple(sorted(names))


class UnknownBindingError(KpeError):
    """render was given a value for a placeholder the template does not declare."""

    def __init__(self, names: list[str]) -> None:
        super().__init__(f"unknown bindings: {', '.join(sorted(names))}")
        self.names = tuple(sorted(names))


class EmptyValueError(KpeError):
    """A required placeholder was bound to an empty or whitespace-only value."""


# backend -----------------------------------------------------------------

class ProviderError(KpeError):
    """Non-retryable provider failure (unexpected 4xx, malformed response)."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class AuthError(ProviderError):
    """Credentials rejected (401/403). Never retried."""


class RateLimitError(ProviderError):
    """Provider asked us to back off (429). Retryable."""


class TransportError(ProviderError):
    """Network failure, timeout, 408 or 5xx. Retryable."""


class CacheCorruptionError(KpeError):
    """Cache entry failed its integrity check, or too many entries did."""


class MissingFixtureError(KpeError):
    """Mock provider could not resolve a pseudo-reference for a prompt."""


# parsing -----------------------------------------------------------------

class ParseError(KpeError):
    """Base class for response-parsing failures."""


class NoMatchError(ParseError):
    """No class label found in the response text."""


class AmbiguityError(ParseError):
    """Two distinct class labels match the same best span."""


class NoNumberError(ParseError):
    """No number found in the response text."""


class RangeError(ParseError):
    """A parsed number lies outside the allowed range."""


class UnknownClassError(ParseError):
    """A class string is not a member of the given schema."""


# chains ------------------------------------------------------------------

class InputError(KpeError):
    """Invalid estimator input (empty translation, bad mode combination)."""


# metrics -----------------------------------------------------------------

class EmptySystemError(KpeError):
    """A system has no parsed scores to average."""


class InsufficientSystemsError(KpeError):
    """Fewer than two comparable systems, or no human-distinguished pairs."""


# alignment ---------------------------------------------------------------

class EmptyInputError(KpeError):
    """Tokenizer or aligner got an empty token list."""


class InputTooLargeError(KpeError):
    """Token grid exceeds the elicitation guard."""


class TooManyTokensError(KpeError):
    """Heatmap axis exceeds the renderable token limit."""


class MatrixShapeError(KpeError):
    """Alignment response has the wrong number of rows or columns."""


class ValueParseError(KpeError):
    """A matrix cell could not be parsed as a number."""

    def __init__(self, row: int, col: int, cell: str) -> None:
        super().__init__(f"row {row}, col {col}: cannot parse {cell!r}")
        self.row = row
        self.col = col


# cli ---------------------------------------------------------------------

class ConfigError(KpeError):
    """Bad or missing configuration value."""

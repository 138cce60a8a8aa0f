"""Error taxonomy shared across the library.

Every failure the library raises deliberately derives from SketchlaError so
callers (and the CLI exit-code mapping) can distinguish our failures from
genuine bugs.
"""


class SketchlaError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(SketchlaError):
    """Operand shapes do not conform."""


class NotSquare(SketchlaError):
    """A square matrix was required."""


class NotSymmetric(SketchlaError):
    """Symmetry tolerance exceeded."""


class IterationFailure(SketchlaError):
    """An iterative factorization failed to converge."""


class InvalidSpec(SketchlaError):
    """A sketch spec or algorithm configuration is ill-formed."""


class RankCollapse(SketchlaError):
    """A sketched matrix lost rank relative to its source."""


class IndexOutOfRange(SketchlaError):
    """An index fell outside the valid range."""


class OutOfOrderBlock(SketchlaError):
    """A stream block arrived at the wrong column offset."""


class IncompleteStream(SketchlaError):
    """finalize() was called before every column was ingested."""


class DegenerateTail(SketchlaError):
    """The spectral tail is numerically zero; the requested ratio is undefined."""


class ParseError(SketchlaError):
    """A text format failed to parse.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedField(ParseError):
    """The file is valid but uses a field this reader does not support."""


class CheckpointError(SketchlaError):
    """A checkpoint blob is malformed, corrupt, or version-incompatible."""


class ConfigError(SketchlaError):
    """Command-line configuration is invalid."""

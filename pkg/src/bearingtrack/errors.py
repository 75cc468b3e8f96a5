"""Exception hierarchy shared by all pipeline stages."""


class BearingTrackError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""


class ParseError(BearingTrackError):
    """A token in an IMS text file is not a decimal number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class FormatError(BearingTrackError):
    """Structural problem with an input file (empty, ragged rows, ...)."""


class ValidationError(BearingTrackError):
    """A configuration or domain object violates its invariants."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


class SizeError(BearingTrackError):
    """Array lengths or dimensions are incompatible."""


class NumericError(BearingTrackError):
    """An iterative numerical routine failed to converge."""

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class GeometryError(BearingTrackError):
    """The reference map is too degenerate to place or score a point."""


class SequenceError(BearingTrackError):
    """Stream items arrive out of timestamp order."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(BearingTrackError):
    """A run configuration is inconsistent with its input data."""

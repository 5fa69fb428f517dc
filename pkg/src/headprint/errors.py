"""Exception types raised across the package."""


class HeadprintError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HeadprintError, ValueError):
    pass


class DegenerateOrientationError(HeadprintError, ValueError):
    """Orientation has no usable projection onto the horizontal plane."""


class EmptyWindowError(HeadprintError, ValueError):
    pass


class InsufficientDataError(HeadprintError, ValueError):
    pass


class FrameMismatchError(HeadprintError, ValueError):
    pass


class AlignmentError(HeadprintError, ValueError):
    pass


class DegenerateSaliencyError(HeadprintError, ValueError):
    pass


class NoOverlapError(HeadprintError, ValueError):
    pass


class DegenerateTrainingError(HeadprintError, ValueError):
    pass


class DegenerateError(HeadprintError, ValueError):
    """Arithmetic degenerate case, e.g. a zero denominator."""


class FormatError(HeadprintError, ValueError):
    """A file on disk does not match its declared format."""


class ConfigError(HeadprintError, ValueError):
    pass

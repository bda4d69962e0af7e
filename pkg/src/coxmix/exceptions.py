"""Exception types raised by coxmix.

All library errors derive from CoxmixError so that callers can catch the
whole family at once.  Input and file-format problems derive from
ValueError as well, matching the convention of raising ValueError for bad
domain input.
"""


class CoxmixError(Exception):
    """Base class for all coxmix errors."""


class EventFileParseError(CoxmixError, ValueError):
    """Raised when an event file or sidecar cannot be parsed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = "line %d: %s" % (line_number, message)
        super().__init__(message)
        self.line_number = line_number


class DataDomainError(CoxmixError, ValueError):
    """Raised when a value is outside its documented domain."""


class InsufficientDataError(CoxmixError, ValueError):
    """Raised when an estimator has no usable observations."""


class DegenerateClusterError(CoxmixError, RuntimeError):
    """Raised when a mixture component loses all responsibility mass."""

    def __init__(self, cluster, mass):
        super().__init__(
            "cluster %d holds total responsibility %.3g; the component is "
            "degenerate" % (cluster, mass)
        )
        self.cluster = cluster
        self.mass = mass


class ModelFormatError(CoxmixError, ValueError):
    """Raised when a serialized model file is malformed or unsupported."""

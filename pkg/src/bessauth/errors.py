"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class InvalidCellError(ValueError):
    """A cell id does not exist in the pack."""


class UnlearnedCellError(RuntimeError):
    """The fuel gauge was asked to measure a cell before its learning cycle."""


class IncompleteModelError(ValueError):
    """A cell model bootstrap trace left buckets uncovered."""

    def __init__(self, missing_buckets):
        self.missing_buckets = list(missing_buckets)
        super().__init__(f"model trace leaves buckets uncovered: {self.missing_buckets}")


class VoltageOutOfWindowError(ValueError):
    """A measurement falls outside the authenticatable voltage window."""


class ProtocolError(RuntimeError):
    """A session operation was attempted in the wrong state."""


class MalformedFrameError(ValueError):
    """A wire frame failed structural validation."""


class TransportError(RuntimeError):
    """The transport dropped or refused a frame outside adversary control."""

"""Exception types shared across the toolkit."""


class VunlearnError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(VunlearnError):
    """Invalid user-supplied configuration: bad field value or missing key."""


class CoefficientError(ConfigurationError):
    """Surrogate coefficient constraints violated."""


class InvariantError(VunlearnError):
    """A validated object violates one of its structural invariants."""


class OracleSizeError(VunlearnError):
    """A dense oracle table would exceed the cell cap."""


class NotFittedError(VunlearnError):
    """An estimator was queried before it was fitted."""


class TrainingDivergedError(VunlearnError):
    """Training produced a non-finite loss; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ContainerError(VunlearnError):
    """Base class for serialized-artifact load failures."""


class ContainerFormatError(ContainerError):
    """Malformed header or payload layout."""


class ContainerVersionError(ContainerError):
    """Unsupported format version."""


class ContainerTruncationError(ContainerError):
    """Payload shorter than the header promises."""


class ContainerChecksumError(ContainerError):
    """Payload bytes do not match the recorded checksum."""

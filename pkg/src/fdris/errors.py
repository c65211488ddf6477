"""Exception types shared across the simulator."""


class FdrisError(Exception):
    """Base class for all library errors."""


class DimensionError(FdrisError):
    """Operand shapes are incompatible."""


class SingularScalarError(FdrisError):
    """Scalar magnitude too small to invert."""


class GeometryError(FdrisError):
    """Degenerate or inconsistent node geometry."""


class DegenerateChannelError(FdrisError):
    """A closed-form beamformer hit a zero (or fully projected-out) channel."""


class LifecycleError(FdrisError):
    """Environment used out of order (e.g. step before reset)."""


class ConfigError(FdrisError):
    """Invalid or unparsable experiment configuration."""


class CheckpointError(FdrisError):
    """Corrupt or incompatible parameter checkpoint."""

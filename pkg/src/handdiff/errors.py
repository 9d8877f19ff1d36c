"""Exception taxonomy shared across the toolkit.

CLI exit codes: usage errors map to 2, data/storage errors to 3 and
numeric failures to 4 (see `handdiff.cli`).
"""


class HanddiffError(Exception):
    """Base class for all toolkit errors."""


class InputError(HanddiffError):
    """Caller passed malformed data (bad shapes, out-of-range indices)."""


class ConfigurationError(HanddiffError):
    """A config value is outside its documented range."""


class TopologyError(HanddiffError):
    """Mesh connectivity violates a required invariant."""


class NonManifoldError(TopologyError):
    """An edge is shared by more than two faces."""


class PoseError(HanddiffError):
    """A joint angle violates its limit while validation is enabled."""


class VisibilityError(HanddiffError):
    """The hand does not project into the camera frame."""


class ProjectionError(HanddiffError):
    """A point sits at or behind the camera plane."""


class CalibrationError(HanddiffError):
    """A fitted artifact failed its held-out quality threshold."""


class StorageError(HanddiffError):
    """Reading or writing an on-disk artifact failed."""


class ModelError(HanddiffError):
    """Network and data shapes disagree, or parameters are unusable."""


class NumericError(HanddiffError):
    """Non-finite values reached a numeric kernel."""


class TaskError(HanddiffError):
    """A downstream task was invoked with a degenerate observation."""


class UsageError(HanddiffError):
    """A CLI invocation does not match the expected schema."""

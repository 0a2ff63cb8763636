"""Exception types shared across the simulator."""


class CinelensError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CinelensError, ValueError):
    """A physically meaningless argument, e.g. a non-positive focal length
    or a focus distance at or inside the focal point."""


class NotFoundError(CinelensError, LookupError):
    """Unknown preset name."""


class NoTargetError(CinelensError):
    """The scene has no designated focus target."""


class EmptyTrackError(CinelensError):
    """A keyframe track with no keyframes cannot be evaluated."""


class DimensionMismatchError(CinelensError):
    """Image buffers passed to a combining operation differ in size."""


class ValidationError(CinelensError):
    """A scenario, scene, or catalog record violates its invariants."""


class BindError(CinelensError, OSError):
    """The server could not bind its listen address."""

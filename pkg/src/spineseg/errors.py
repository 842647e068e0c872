"""Exception types shared across the toolkit.

Every failure mode that callers are expected to branch on gets its own
class; anything else surfaces as a plain ValueError.
"""


class SpinesegError(Exception):
    """Base class for all toolkit-specific errors."""


# volume and raster I/O

class MissingKeyError(SpinesegError):
    """A required header key is absent."""


class UnsupportedValueError(SpinesegError):
    """A header key carries a value outside the supported subset."""


class MalformedLineError(SpinesegError):
    """A header line is not an ASCII ``key = value`` pair."""


class TruncatedPayloadError(SpinesegError):
    """Fewer payload bytes than the header promises."""


class ExcessPayloadError(SpinesegError):
    """More payload bytes than the header promises."""


class UnknownLevelError(SpinesegError):
    """A grayscale level outside the canonical label encoding."""


# mask restoration

class UncoveredIntensityError(SpinesegError):
    """A non-black intensity falls outside every configured shade range."""


# dataset filtration

class EmptyMaskError(SpinesegError):
    """A mask with zero pixels cannot yield class weights."""


class ZeroWeightError(SpinesegError):
    """max_over_min imbalance is undefined when a class weight is zero."""


# metrics

class ShapeMismatchError(SpinesegError):
    """Two arrays that must share a shape do not."""


class EmptySurfaceError(SpinesegError):
    """A surface-distance metric was asked for a class with no surface."""


# loss kernel

class NotNormalizedError(SpinesegError):
    """A probability tensor whose per-pixel channel sums stray from 1."""


class PerturbationOutOfRangeError(SpinesegError):
    """A finite-difference step would leave the valid probability domain."""

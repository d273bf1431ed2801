"""Exception types shared across the toolkit."""


class EtcError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(EtcError):
    """Image dimensions are not divisible by the block size."""


class ShapeError(EtcError):
    """Array shape does not match what the operation requires."""


class RangeError(EtcError):
    """A parameter is outside its legal range."""


class ModeError(EtcError):
    """Operation requires a different cipher mode."""


class UsageError(EtcError):
    """Caller misuse: bad arguments, empty corpus, unwritable path."""

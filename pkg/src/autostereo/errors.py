"""Exception hierarchy shared across the package."""


class AutostereoError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(AutostereoError, ValueError):
    pass


class CorruptData(AutostereoError, ValueError):
    pass


class ZeroDimension(AutostereoError, ValueError):
    pass


class DimensionMismatch(AutostereoError, ValueError):
    pass


class TooSmall(AutostereoError, ValueError):
    pass


class InvalidSpec(AutostereoError, ValueError):
    pass


class DepthOutOfRange(AutostereoError, ValueError):
    pass


class DisparityOutOfRange(AutostereoError, ValueError):
    pass


class GeometryInvalid(AutostereoError, ValueError):
    pass


class TextureTooNarrow(AutostereoError, ValueError):
    pass


class AlphaOutOfRange(AutostereoError, ValueError):
    pass


class NoPeriod(AutostereoError):
    """Raised when an image shows no horizontal periodic structure."""


class SearchRangeInvalid(AutostereoError, ValueError):
    pass


class ShiftBoundInvalid(AutostereoError, ValueError):
    pass


class ShapeMismatch(AutostereoError, ValueError):
    pass


class EvalBeforeTrain(AutostereoError, RuntimeError):
    pass


class NotScalar(AutostereoError, ValueError):
    pass


class DisconnectedGraph(AutostereoError, RuntimeError):
    pass


class MissingGrad(AutostereoError, RuntimeError):
    pass


class ConfigInvalid(AutostereoError, ValueError):
    pass


class DivergedLoss(AutostereoError, RuntimeError):
    """Training produced a non-finite loss.

    ``checkpoint`` holds the path of the last good checkpoint, if any.
    """

    def __init__(self, msg, checkpoint=None, step=None):
        super().__init__(msg)
        self.checkpoint = checkpoint
        self.step = step


class SizeMismatch(AutostereoError, ValueError):
    pass


class EmptyDatabase(AutostereoError, ValueError):
    pass


class CheckpointError(AutostereoError, ValueError):
    pass

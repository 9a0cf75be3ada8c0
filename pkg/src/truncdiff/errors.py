class TruncDiffError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(TruncDiffError, ValueError):
    pass


class TimestepRangeError(TruncDiffError, ValueError):
    pass


class StepOrderError(TruncDiffError, ValueError):
    pass


class DimensionMismatchError(TruncDiffError, ValueError):
    pass


class CorpusTooSmallError(TruncDiffError, ValueError):
    pass


class UnknownKindError(TruncDiffError, ValueError):
    pass


class TooManyObstaclesError(TruncDiffError, ValueError):
    pass


class ShapeMismatchError(TruncDiffError, ValueError):
    pass


class MaskedContextError(TruncDiffError, ValueError):
    pass


class EmptySceneSetError(TruncDiffError, ValueError):
    pass


class ConfigError(TruncDiffError, ValueError):
    pass


class ModelFormatError(TruncDiffError, ValueError):
    pass


class CorpusFormatError(TruncDiffError, ValueError):
    pass

"""Exception hierarchy shared by all stages."""


class RoadGradeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RoadGradeError, ValueError):
    """Bad input or configuration (maps to CLI exit status 1)."""


# raster_io
class MissingFile(ValidationError, FileNotFoundError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class ZeroDimension(ValidationError):
    pass


class ZeroTileSize(ValidationError):
    pass


class UnknownColor(ValidationError):
    pass


class IoFailure(RoadGradeError, OSError):
    pass


# arr / descriptors
class DegeneratePath(ValidationError):
    pass


class EmptySegment(ValidationError):
    pass


class SegmentOutsideMask(ValidationError):
    pass


class InvalidThresholds(ValidationError):
    pass


# grading
class ProviderError(RoadGradeError):
    """A grade-prior provider failed; callers fall back to the heuristic prior."""


class ProviderTimeout(ProviderError):
    pass


class MalformedResponse(ProviderError):
    pass


class NonFiniteScore(ProviderError):
    pass


class NoGradeFound(ValidationError):
    pass


class AllWeightsZero(ValidationError):
    pass


class UngradedSegment(ValidationError):
    pass


# metrics
class ShapeMismatch(RoadGradeError):
    pass


class EmptyMatrix(ValidationError):
    pass


# dataset_tools
class ParseError(ValidationError):
    pass


class InvalidGrade(ParseError):
    pass


class TooFewPoints(ParseError):
    pass


class EmptyCatalog(ValidationError):
    pass


class DegenerateLine(ValidationError):
    pass


class EmptyDirectory(ValidationError):
    pass


# cli
class ConfigInvalid(ValidationError):
    pass


class UnknownSubcommand(ValidationError):
    pass

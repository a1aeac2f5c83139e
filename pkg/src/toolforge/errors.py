"""Exception hierarchy shared by every toolforge module."""


class ToolforgeError(Exception):
    """Base class for all library errors."""


# geometry
class GeometryError(ToolforgeError):
    pass


class EmptyCloud(GeometryError):
    pass


class EmptySurface(GeometryError):
    pass


class NoVisibleSurface(GeometryError):
    pass


# shape editor
class EditError(ToolforgeError):
    pass


class MissingDimension(EditError):
    pass


class NonPositiveDimension(EditError):
    pass


class UnknownFeature(EditError):
    pass


class ScaleOutOfRange(EditError):
    pass


class GridTooLarge(EditError):
    def __init__(self, actual: int, maximum: int):
        super().__init__(f"combination grid of {actual} tools exceeds max_size {maximum}")
        self.actual = actual
        self.maximum = maximum


# task simulation
class FamilyMismatch(ToolforgeError):
    pass


# causal discovery
class DiscoveryError(ToolforgeError):
    pass


class MissingDefaultPoint(DiscoveryError):
    pass


class NoWorkingRange(DiscoveryError):
    def __init__(self, feature: str, message: str = ""):
        super().__init__(message or f"no grid point of {feature!r} reaches the success threshold")
        self.feature = feature


# matcher
class MatchError(ToolforgeError):
    pass


class NoCausalFeatures(MatchError):
    pass


class MissingRange(MatchError):
    pass


class MissingPhysicalMeasurement(MatchError):
    pass


class NoKeypoints(MatchError):
    pass


# suggester
class SuggesterError(ToolforgeError):
    pass


class BackendUnavailable(SuggesterError):
    pass


class EmptyProposal(SuggesterError):
    pass


class Exhausted(SuggesterError):
    pass


# pipeline
class ConfigError(ToolforgeError):
    pass


class MissingStageInput(ToolforgeError):
    def __init__(self, path):
        super().__init__(f"missing stage input: {path}")
        self.path = path


class StageError(ToolforgeError):
    """A module error re-raised with the owning stage and target id."""

    def __init__(self, stage: str, target: str | None, cause: Exception):
        where = f"stage {stage!r}" + (f", target {target!r}" if target else "")
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.target = target
        self.cause = cause

"""Exception types raised across the toolkit."""


class BearingNetError(Exception):
    """Base class for all toolkit errors."""


class SelfLoopError(BearingNetError):
    pass


class DuplicateEdgeError(BearingNetError):
    pass


class VertexOutOfRangeError(BearingNetError):
    pass


class DisconnectedGraphError(BearingNetError):
    pass


class DegenerateVectorError(BearingNetError):
    pass


class CoincidentPointsError(BearingNetError):
    """Two endpoints of an edge are (numerically) at the same position."""

    def __init__(self, edge, length=None):
        self.edge = tuple(edge)
        self.length = length
        msg = f"coincident points on edge {self.edge}"
        if length is not None:
            msg += f" (separation {length:.3e})"
        super().__init__(msg)


class DegenerateConfigurationError(BearingNetError):
    pass


class DegenerateTargetError(BearingNetError):
    pass


class MissingBearingError(BearingNetError):
    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(f"no bearing supplied for edge {self.edge}")


class NonUnitBearingError(BearingNetError):
    pass


class AntisymmetryViolationError(BearingNetError):
    pass


class EmptyFollowerSetError(BearingNetError):
    pass


class SingularFollowerBlockError(BearingNetError):
    pass


class TooFewAnchorsError(BearingNetError):
    pass


class SizeMismatchError(BearingNetError):
    pass


class FieldEvaluationError(BearingNetError):
    """A vector field (or an observer) failed mid-integration."""


class GenerationFailureError(BearingNetError):
    pass


class ScenarioParseError(BearingNetError):
    pass


class ScenarioValidationError(BearingNetError):
    pass

"""Exception hierarchy shared by every module."""


class ImpedanceMapsError(Exception):
    """Base class for all package errors."""


class InconsistentGeometry(ImpedanceMapsError):
    pass


class SolveFailure(ImpedanceMapsError):
    pass


class SegmentOffGrid(ImpedanceMapsError):
    pass


class DimensionMismatch(ImpedanceMapsError):
    pass


class LambdaOutOfRange(ImpedanceMapsError):
    pass


class CutoffTooTight(ImpedanceMapsError):
    pass


class GlancingRay(ImpedanceMapsError):
    pass


class NoWitnessFound(ImpedanceMapsError):
    pass


class LayoutInvalid(ImpedanceMapsError):
    pass


class ConfigInvalid(ImpedanceMapsError):
    pass

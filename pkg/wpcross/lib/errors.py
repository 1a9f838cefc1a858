class WpcrossError(Exception):
    """
    Base class for every failure raised by the toolkit.
    Each family carries the process exit code used by the command line.
    """

    exit_code = 1


class ConfigurationError(WpcrossError):
    exit_code = 2


class RegimeError(WpcrossError):
    exit_code = 3


class NumericalError(WpcrossError):
    exit_code = 4


class EvaluationError(NumericalError):
    def __init__(self, x, what: str = "potential") -> None:
        super().__init__(f"Non-finite {what} evaluation at x={list(x)}")
        self.x = x


class CrossingPointError(NumericalError):
    def __init__(self, x) -> None:
        super().__init__(f"Point x={list(x)} lies on the crossing set, projector undefined")
        self.x = x


class GapCollapseError(NumericalError):
    pass


class SingularTimeError(NumericalError):
    pass


class GridOverflowError(NumericalError):
    pass


class BoxEscapeError(NumericalError):
    pass


class ResolutionError(NumericalError):
    pass


class InterpolationCoverageError(NumericalError):
    pass


class ToleranceError(NumericalError):
    pass


class GammaPoleError(NumericalError):
    pass


class NoMinimumError(RegimeError):
    pass


class DegenerateCrossingError(RegimeError):
    pass


class SecondCrossingError(RegimeError):
    pass


class OnSigmaError(RegimeError):
    pass

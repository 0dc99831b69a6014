"""Exception types shared across the package."""


class MorseError(Exception):
    """Base class for every error raised by morsekit."""


class RegularityError(MorseError):
    pass


class ProjectionDivergence(MorseError):
    pass


class NotCriticalError(MorseError):
    pass


class NotInvariantError(MorseError):
    pass


class DegenerateCritical(MorseError):
    pass


class StepCollapse(MorseError):
    pass


class EscapedDomain(MorseError):
    pass


class InsufficientTail(MorseError):
    pass


class ChartOverflow(MorseError):
    pass


class OddOrbitError(MorseError):
    pass


class NonGenericWarning(MorseError, Warning):
    """Raised when flow data look non-generic (not Morse-Smale)."""


class MorseViolation(MorseError):
    """Raised when a scene has degenerate critical points."""

    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)


class MissingPairError(MorseError):
    pass


class NotAComplexError(MorseError):
    pass


class ZeroClassError(MorseError):
    pass


class ChainIdentityFailure(MorseError):
    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


class BoundViolation(MorseError):
    pass


class NotCauchy(MorseError):
    pass


class GridTooCoarse(MorseError):
    pass


class ThresholdAmbiguity(MorseError):
    pass


class IllConditioned(MorseError):
    pass


class ParseError(MorseError):
    pass


class UnknownFixture(MorseError):
    pass

"""Exception hierarchy.

Every domain error derives from :class:`JumpSmoothError` so the command line
can map the whole family onto a single exit code.
"""


class JumpSmoothError(ValueError):
    """Base class for validation and domain errors."""


class NonIncreasingEnergies(JumpSmoothError):
    pass


class DegenerateBohrFrequency(JumpSmoothError):
    pass


class UpwardRate(JumpSmoothError):
    pass


class NegativeRate(JumpSmoothError):
    pass


class NoChannels(JumpSmoothError):
    pass


class UnknownChannel(JumpSmoothError):
    pass


class IndexOutOfRange(JumpSmoothError):
    pass


class DimensionMismatch(JumpSmoothError):
    pass


class InvalidState(JumpSmoothError):
    """A matrix failed the density-matrix or effect-matrix checks."""


class InvalidGrid(JumpSmoothError):
    pass


class StepTooLarge(JumpSmoothError):
    pass


class InvalidRecord(JumpSmoothError):
    pass


class EventOutsideHorizon(JumpSmoothError):
    pass


class GridMismatch(JumpSmoothError):
    pass


class NotAnInstrument(JumpSmoothError):
    pass


class SigmaOnEvent(JumpSmoothError):
    pass


class ZeroLikelihood(JumpSmoothError):
    pass


class EnumerationTooLarge(JumpSmoothError):
    pass


class ZeroProbabilityRecord(JumpSmoothError):
    pass


class InvalidConfig(JumpSmoothError):
    pass

"""Semantic exceptions and warnings shared across the library."""


class CycleError(ValueError):
    """A relation set implies both a >= b and b >= a for distinct arms."""


class IncompatibleModelError(ValueError):
    """Two states in a model set do not strictly disagree on any arm pair."""


class InsufficientData(ValueError):
    """An (instance, arm) pair has fewer observations than required."""


class DimensionMismatch(ValueError):
    """Arm counts of two objects disagree."""


class EmptyModelSet(ValueError):
    """A model set with zero states was supplied where one is required."""


class AmbiguousBestArm(ValueError):
    """A state's partial order does not single out a unique best arm."""


class NonFiniteReward(ValueError):
    """A reward observation was NaN or infinite."""


class TooManyStates(ValueError):
    """More distinct total orders requested than permutations exist."""


class MalformedCsv(ValueError):
    """A CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_num: int, message: str):
        self.line_num = line_num
        super().__init__(f"line {line_num}: {message}")


class UnknownGenre(ValueError):
    """A movie lists a genre label outside the canonical set."""


class ConfigError(ValueError):
    """An experiment config file is malformed or has unknown keys."""


class ResolutionTooCoarse(UserWarning):
    """A grid-evaluated bound changed by more than 5% on refinement."""

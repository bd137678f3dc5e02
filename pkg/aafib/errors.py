"""Exception types raised across the aafib package."""

from typing import Optional


class AafibError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ModelValidationError(AafibError, ValueError):
    """A POMDP model violates one of its probabilistic invariants."""


class PomdpParseError(AafibError, ValueError):
    """A `.pomdp` document could not be parsed. Carries the offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ShapeMismatchError(AafibError, ValueError):
    """Alpha vectors, beliefs or policy files do not match the model size."""


class ImpossibleObservationError(AafibError):
    """Belief update hit an observation with zero probability."""


class InsufficientHistoryError(AafibError, ValueError):
    """Anderson memory holds too few iterates to form differences."""


class EvaluationError(AafibError, ValueError):
    """Policy evaluation was asked for something the model cannot provide."""

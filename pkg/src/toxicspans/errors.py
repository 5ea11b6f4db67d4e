"""Exception types shared across the package."""


class ToxicSpansError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(ToxicSpansError):
    """An input file does not conform to its documented format."""


class ValidationError(ToxicSpansError):
    """Inputs are well-formed but inconsistent with each other or a contract."""


class NonFiniteError(ToxicSpansError):
    """A numeric computation produced NaN or infinity."""


class TrainingDivergedError(NonFiniteError):
    """The training loss became non-finite."""

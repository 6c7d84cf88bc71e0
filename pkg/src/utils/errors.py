"""
Exception hierarchy for IM-DCL.

All library errors derive from ImdclError; most also derive from the
builtin they specialize so callers can catch ValueError/ArithmeticError.
"""


class ImdclError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(ImdclError, ValueError):
    """Operand shapes do not line up."""


class ContractError(ImdclError, ValueError):
    """A documented precondition was violated."""


class DegenerateFeatureError(ImdclError, ValueError):
    """A feature vector is too close to zero for a cosine similarity."""


class StaleBankError(ShapeError):
    """Memory bank rows do not match the live predictions."""


class NumericalError(ImdclError, ArithmeticError):
    """Non-finite values appeared (NaN/Inf), e.g. a diverging loss."""


class ConfigError(ImdclError, ValueError):
    """The run configuration could not be parsed or validated."""

"""Exception hierarchy.

Input problems derive from :class:`InputError`; failures that arise from the
numbers themselves (non-positive-definite matrices, an orbit with zero null
mass, factorial or combinatorial blowups) derive from :class:`NumericalError`.
The CLI maps the two families to different exit codes.
"""


class GenpermError(Exception):
    pass


class InputError(GenpermError, ValueError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptySample(InputError):
    pass


class MissingSampler(InputError):
    pass


class NumericalError(GenpermError, ArithmeticError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class OrbitMassZero(NumericalError):
    """Every permutation image of the point has zero null density."""


class ExhaustiveLimit(NumericalError):
    """Full enumeration of S_n was requested above the configured size."""


class CompositionLimit(NumericalError):
    pass


class DiscontinuityPoint(NumericalError):
    """The randomization probability is undefined because p_r = 0."""

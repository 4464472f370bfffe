"""Typed numerical failures raised by the library.

Every failure that signals a numerical condition (as opposed to a usage
error) derives from :class:`NumericalError`; the CLI maps those to exit
code 2.
"""


class NumericalError(Exception):
    """Base class for numerical failures."""


class NonConvergence(NumericalError):
    pass


class SingularPencil(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class CutoffViolation(NumericalError):
    """A query frequency sits on or beyond the OTF guard band."""


class PencilFailure(NumericalError):
    """Matrix-pencil step failed for one direction; callers may retry."""


class DegenerateDirections(NumericalError):
    pass


class PartitionMismatch(NumericalError):
    pass


class WhiteningRankDeficient(NumericalError):
    pass


class EigCollision(NumericalError):
    pass


class MarginTooSmall(NumericalError):
    pass


class BadShape(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass

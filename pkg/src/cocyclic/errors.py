"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class CocyclicError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CocyclicError, ValueError):
    """An input was rejected before any numerical work started."""


class NumericalError(CocyclicError, ArithmeticError):
    """A numerical contract failed after construction."""


class AtomAtOne(InputError):
    pass


class DuplicateAtom(InputError):
    pass


class DegreeCapExceeded(InputError):
    pass


class ThetaZeroIsOne(InputError):
    pass


class DegenerateAtOne(InputError):
    pass


class DomainError(InputError):
    """Evaluation point outside the closed unit disc."""


class NotInModelSpace(InputError):
    pass


class ConfigError(InputError):
    """Experiment configuration could not be loaded or validated."""


class IllConditionedClark(NumericalError):
    pass


class SpectrumAtOne(NumericalError):
    """The Clark unitary has an eigenvalue too close to 1 for the calculus."""


class QuadratureNotConverged(NumericalError):
    pass


class BasisDeficient(NumericalError):
    pass


class DecompositionFailed(NumericalError):
    """Singular value decomposition did not converge."""

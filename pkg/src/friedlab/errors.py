"""Exception hierarchy shared by all modules."""


class FriedlabError(Exception):
    """Base class for every error raised by the package."""


class BadParameter(FriedlabError, ValueError):
    pass


class ParseError(FriedlabError, ValueError):
    """Malformed mesh or config file; the message names the line or field."""


class NotSPD(FriedlabError, ValueError):
    pass


class GramNotPD(NotSPD):
    """A Gram matrix (interior or boundary) is not positive definite."""


class SingularShift(FriedlabError, ArithmeticError):
    pass


class DirichletResonance(SingularShift):
    """The spectral parameter sits on (or too close to) a Dirichlet eigenvalue."""

    def __init__(self, lam, nearest, tol):
        self.lam = lam
        self.nearest = nearest
        self.tol = tol
        super().__init__(
            f"lambda={lam!r} is within {tol:.3g} of the Dirichlet eigenvalue {nearest!r}"
        )


class EmptyKernel(FriedlabError, ValueError):
    pass


class InsufficientEigenvalues(FriedlabError, ValueError):
    pass


class BadAlpha(BadParameter):
    pass


class IllConditioned(FriedlabError, ArithmeticError):
    pass


class FluxNotZero(FriedlabError, ValueError):
    pass


class NonOrthogonal(FriedlabError, ValueError):
    pass

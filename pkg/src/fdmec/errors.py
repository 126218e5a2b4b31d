"""Exception types shared across the package."""


class FdmecError(Exception):
    pass


class ConfigurationError(FdmecError, ValueError):
    """Invalid parameters, scenario or document."""


class InfeasibleDemandError(FdmecError, ValueError):
    """Positive bits were scheduled into a phase of zero duration."""


class DomainError(FdmecError, ValueError):
    """A variable left the region where a model term is defined."""


class NumericalError(FdmecError, ArithmeticError):
    """An evaluator produced a non-finite value at an accepted point."""


class ConvexityError(FdmecError, ArithmeticError):
    """Newton system not positive definite: the subproblem is not convex here."""


class InfeasibleProblemError(FdmecError):
    """No strictly feasible allocation could be produced.

    ``family`` names the constraint family that blocks feasibility.
    """

    def __init__(self, message, family=None, violation=None):
        super().__init__(message)
        self.family = family
        self.violation = violation

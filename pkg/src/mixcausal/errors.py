"""Exception and warning types raised across the package."""


class MixCausalError(Exception):
    """Base class for all package errors."""


class DataError(MixCausalError, ValueError):
    """Input data failed validation (missing values, bad treatment coding, ...)."""


class BoundaryError(MixCausalError, ValueError):
    """A mixing proportion fell outside the open interval (0, 1)."""


class DegenerateMixingError(MixCausalError, ValueError):
    pass


class SingularIdentificationError(MixCausalError, ValueError):
    pass


class ConvergenceError(MixCausalError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``trace`` holds whatever diagnostics the solver collected (last iterate,
    gradient norm, iteration count).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or {}


class SeparationError(ConvergenceError):
    """Logistic coefficients diverged; the classes are (quasi-)separated."""


class BalanceInfeasibleError(ConvergenceError):
    """Entropy balancing dual did not converge, usually a convex-hull violation."""


class DegenerateWeightsError(MixCausalError, ZeroDivisionError):
    pass


class SingularBreadError(MixCausalError, ArithmeticError):
    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class UnreliableBootstrapError(MixCausalError, RuntimeError):
    pass


class ReplicateFailureError(MixCausalError, RuntimeError):
    """Too many mixing-algorithm replicates failed to fit."""


class ExtremeWeightWarning(UserWarning):
    pass


class MultipleRootsWarning(UserWarning):
    pass

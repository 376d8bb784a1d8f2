"""Exception types raised by nmfinpaint."""


class SymmetryViolation(ValueError):
    """Synthesized frames carry a non-negligible imaginary part."""


class UnsupportedConfiguration(ValueError):
    """A transform or estimator setting outside the supported set."""


class UndefinedMetric(ValueError):
    """A metric whose reference has zero energy."""


class InfeasibleSpec(ValueError):
    """A degradation spec that cannot be realized on the given signal."""


class NumericalBreakdown(ArithmeticError):
    """The observed-sample covariance could not be factorized.

    Attributes
    ----------
    frame : int or None
        Index of the offending frame.
    iteration : int or None
        Outer iteration (1-based) during which the failure happened.
    """

    def __init__(self, message, frame=None, iteration=None):
        self.frame = frame
        self.iteration = iteration
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if frame is not None:
            where.append(f"frame {frame}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)

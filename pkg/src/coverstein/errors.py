"""Exception types shared across the package.

Plain ``ValueError`` is reserved for domain/usage mistakes (bad argument
ranges, dimension mismatches). The two classes below distinguish the other
failure modes the CLI maps to dedicated exit codes.
"""


class ValidityError(ValueError):
    """A formula precondition (validity flag) does not hold.

    The message names the violated inequality, e.g.
    ``"variance formulas require 4*rho < n**(1/d)"``.
    """


class NumericalError(ArithmeticError):
    """A numerical procedure failed to reach its accuracy target.

    ``achieved_error`` carries the best error estimate available at the
    point of failure (quadrature residual, clamp excursion, ...).
    """

    def __init__(self, message: str, achieved_error: float | None = None):
        super().__init__(message)
        self.achieved_error = achieved_error

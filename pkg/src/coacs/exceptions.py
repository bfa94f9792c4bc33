"""Exception types raised by the healing, phasing and metric code."""


class NumericFailure(ArithmeticError):
    """A non-finite value or an exhausted line search inside the solver.

    ``pixel`` is the (row, col) index of the offending value when one is
    known, ``diagnostics`` a free-form dict of solver state.
    """

    def __init__(self, message, pixel=None, diagnostics=None):
        super().__init__(message)
        self.pixel = pixel
        self.diagnostics = dict(diagnostics or {})


class DegenerateStep(ArithmeticError):
    """Two iterates coincide, so no curvature estimate can be formed."""


class UndefinedMetric(ValueError):
    """An R factor was requested over a region with zero reference signal."""

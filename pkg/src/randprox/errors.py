"""Exception types shared across the library."""


class ParameterError(ValueError):
    """A numeric argument is outside its documented range."""


class ShapeError(ValueError):
    """Array arguments have inconsistent dimensions."""


class UsageError(ValueError):
    """An algorithm was invoked on a problem whose shape it does not support."""


class RateUnavailableError(ValueError):
    """The hypotheses behind a certified rate do not hold.

    The library refuses to emit a contraction factor outside the conditions
    it was proved under; it never extrapolates to a silent c >= 1.
    """

    def __init__(self, theorem_id, hypothesis):
        self.theorem_id = theorem_id
        self.hypothesis = hypothesis
        super().__init__(f"{theorem_id}: hypothesis violated: {hypothesis}")


class OracleUnavailableError(ValueError):
    """No independent ground-truth computation exists for this problem."""


class DiagnosticsUnavailableError(ValueError):
    """A requested diagnostic needs data the problem does not carry."""

"""Exception types raised by the package."""


class SemisensError(Exception):
    """Base class for numerical failures (CLI exit code 2)."""


class DimensionError(ValueError):
    def __init__(self, name, got, expected, what="length"):
        self.name, self.got, self.expected = name, got, expected
        super().__init__(f"{name} has {what} {got}, expected {expected}")


class DegenerateLikelihoodError(SemisensError):
    """Every grid cell underflowed for some observation."""


class IllPosedError(SemisensError):
    """The discretized integral equation is too ill-conditioned to invert directly."""


class JacobianSingularError(SemisensError):
    pass


class SeparationError(SemisensError):
    """A logistic fit diverged (complete or quasi-complete separation)."""


class ConvergenceError(SemisensError):
    pass

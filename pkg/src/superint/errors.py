"""Exception types shared across the package."""


class SuperintError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(SuperintError, ValueError):
    pass


class OutOfRange(SuperintError, ValueError):
    pass


class NoRoot(SuperintError):
    """The degenerate linear equation for h_x has no solution."""


class SingularBranch(SuperintError):
    """The derivative of the cubic vanishes at the tracked root."""


class RootCollision(SuperintError):
    pass


class MetricDegenerate(SuperintError):
    pass


class NoRootAtStart(SuperintError):
    pass


class RootNotUnique(NoRootAtStart):
    pass


class StepFailure(SuperintError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AmbiguousFit(SuperintError):
    def __init__(self, message, candidates=(), report=None):
        super().__init__(message)
        self.candidates = tuple(candidates)
        self.report = report


class ConditionsFailed(SuperintError):
    def __init__(self, reasons):
        super().__init__("; ".join(reasons))
        self.reasons = list(reasons)


class NoReturnDetected(SuperintError):
    pass

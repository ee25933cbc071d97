"""Exception hierarchy shared by all modules."""


class HardyMixError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(HardyMixError):
    """Malformed scenario or run configuration."""


class EmptyDomain(ConfigError):
    pass


class CrackNotInterior(ConfigError):
    pass


class HypothesisFailure(HardyMixError):
    """A geometric or analytic hypothesis does not hold for the input."""


class DEmpty(HypothesisFailure):
    pass


class ENotOnBoundary(HypothesisFailure):
    pass


class NonzeroNearE(HypothesisFailure):
    def __init__(self, message, cells=None, discrepancy=float("nan")):
        super().__init__(message)
        self.cells = cells
        self.discrepancy = discrepancy


class CoverGap(HypothesisFailure):
    def __init__(self, message, cells=None):
        super().__init__(message)
        self.cells = cells


class PatchNotReflectable(HypothesisFailure):
    pass


class ConditionFailed(HypothesisFailure):
    def __init__(self, condition):
        super().__init__(condition)
        self.condition = condition


class BadDimension(ConfigError):
    pass


class ScaleTooFine(ConfigError):
    pass


class QuadratureUnderflow(HypothesisFailure):
    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class SolverError(HardyMixError):
    """Numerical solver failure."""


class NoConvergence(SolverError):
    def __init__(self, message, residual=float("nan"), iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate

"""Exception hierarchy.

Every error carries the process exit code used by the command line front end:
2 for configuration problems, 3 when an input violates a modelling assumption
(non-separable drive, sign change of the displacement field, flows leaving the
chart) and 4 for numerical failures.
"""


class KHError(Exception):
    exit_code = 4


class ConfigError(KHError):
    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class UnknownKind(ConfigError):
    pass


class UnknownBoundary(ConfigError):
    pass


class DomainMismatch(ConfigError):
    pass


class GridMismatch(KHError):
    pass


class ModelAssumptionError(KHError):
    exit_code = 3


class DegenerateFrame(ModelAssumptionError):
    pass


class NonSeparable(ModelAssumptionError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class SignChange(ModelAssumptionError):
    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


class RangeExceeded(ModelAssumptionError):
    def __init__(self, message, max_tau=None):
        self.max_tau = max_tau
        super().__init__(message)


class ZeroField(ModelAssumptionError):
    pass


class NotConverged(KHError):
    def __init__(self, message, k_achieved=0):
        self.k_achieved = k_achieved
        super().__init__(message)


class FactorizationFailed(KHError):
    pass


class LinearSolveFailed(KHError):
    pass


class Unstable(KHError):
    pass


class NonConvergedTail(UserWarning):
    """Fourier tail of a dressed quantity above the requested threshold."""

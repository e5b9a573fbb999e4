"""Exception types raised by quadnls."""


class QuadNLSError(Exception):
    pass


class GridError(QuadNLSError, ValueError):
    """Field does not live on the grid it was paired with, or bad grid spec."""


class NonpositiveInteraction(QuadNLSError, ValueError):
    pass


class NegativeInteraction(NonpositiveInteraction):
    pass


class ZeroMassComponent(QuadNLSError, ValueError):
    pass


class NoDescent(QuadNLSError, RuntimeError):
    pass


class NotConverged(QuadNLSError, RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class PositiveEnergy(QuadNLSError, RuntimeError):
    pass


class NonFinite(QuadNLSError, FloatingPointError):
    def __init__(self, msg, t_last=None, last_record=None):
        super().__init__(msg)
        self.t_last = t_last
        self.last_record = last_record


class BoundaryDecayError(QuadNLSError, ValueError):
    pass


class InsufficientGrowth(QuadNLSError, ValueError):
    pass


class TooCloseToBlowup(QuadNLSError, ValueError):
    pass


class KappaMismatch(QuadNLSError, ValueError):
    pass


class MassNotMinimal(QuadNLSError, ValueError):
    pass


class CannotAchieve(QuadNLSError, ValueError):
    pass


class MassConditionViolated(QuadNLSError, ValueError):
    pass


class CorruptSnapshot(QuadNLSError, IOError):
    pass


class VersionMismatch(QuadNLSError, IOError):
    pass


class ConfigError(QuadNLSError, ValueError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field

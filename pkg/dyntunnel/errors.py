
class DynTunnelError(Exception):
    """
    Base class of every error raised by the toolkit.  The exit code is what the command line
    returns when the error reaches it.
    """
    exit_code = 1


class ConfigError(DynTunnelError):
    exit_code = 2

    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f'{key}: {constraint}')

    def __reduce__(self):
        return type(self), (self.key, self.constraint)


class NumericalError(DynTunnelError):
    """
    A failed computation.  A run that fails part way attaches what it finished as partial.
    """
    exit_code = 3
    partial = None


class NonFinite(NumericalError):
    pass


class GridTooNarrow(NumericalError):
    pass


class GridMismatch(NumericalError):
    pass


class PhaseMismatch(NumericalError):
    pass


class BoundaryLeak(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NotElliptic(NumericalError):
    pass


class BasisTooSmall(NumericalError):
    pass


class DegenerateUnresolved(NumericalError):
    pass


class DoubletNotFound(NumericalError):
    pass


class ContinuationStuck(NumericalError):

    def __init__(self, msg: str, last_good_u: float):
        self.msg = msg
        self.last_good_u = last_good_u
        super().__init__(f'{msg} (last good U = {last_good_u:.6g})')

    def __reduce__(self):
        return type(self), (self.msg, self.last_good_u)


class ToleranceFailure(NumericalError):
    pass


class DegenerateDoublet(NumericalError):
    pass


class SeriesTooShort(NumericalError):
    pass

"""Exception hierarchy shared by all tseg modules."""


class TsegError(Exception):
    """Base class for every error raised by this package."""


class ZeroRow(TsegError, ValueError):
    pass


class DimMismatch(TsegError, ValueError):
    pass


class DomainError(TsegError, ValueError):
    pass


class EmptyComponent(TsegError):
    def __init__(self, k, mass=None):
        self.k = k
        self.mass = mass
        msg = f"component {k} is empty"
        if mass is not None:
            msg += f" (mass {mass:.3g})"
        super().__init__(msg)


class NotPositiveDefinite(TsegError, ValueError):
    pass


class TooFewSamples(TsegError, ValueError):
    pass


class DegenerateChannel(TsegError, UserWarning):
    """Emitted as a warning when a feature channel has zero variance."""


class KMismatch(TsegError, ValueError):
    pass


class ConstantInput(TsegError, ValueError):
    pass


class ParseError(TsegError, ValueError):
    pass


class CoverageError(TsegError, ValueError):
    pass


class FormatError(TsegError, ValueError):
    pass

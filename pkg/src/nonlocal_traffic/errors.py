"""Exception hierarchy shared by every module of the package."""


class NonlocalTrafficError(Exception):
    """Base class for all package errors."""


class GridMismatch(NonlocalTrafficError, ValueError):
    pass


class InvalidInterval(NonlocalTrafficError, ValueError):
    pass


class KernelNotNormalized(NonlocalTrafficError, ValueError):
    pass


class WrongKernelFamily(NonlocalTrafficError, ValueError):
    pass


class UnstableStep(NonlocalTrafficError, RuntimeError):
    pass


class NonfiniteState(NonlocalTrafficError, RuntimeError):
    pass


class FluxNotGenuinelyNonlinear(NonlocalTrafficError, ValueError):
    pass


class EntropyUnboundedAtZero(NonlocalTrafficError, ValueError):
    pass


class TestFunctionOutOfWindow(NonlocalTrafficError, ValueError):
    __test__ = False


class SnapshotMissing(NonlocalTrafficError, KeyError):
    pass


class ConfigError(NonlocalTrafficError, ValueError):
    pass

"""Exception hierarchy for the ipgm package."""


class IPGMError(Exception):
    """Base class for all errors raised by ipgm."""


class DimensionMismatch(IPGMError, ValueError):
    pass


class ZeroNormVector(IPGMError, ValueError):
    pass


class InvalidVector(IPGMError, ValueError):
    pass


class MalformedFile(IPGMError, ValueError):
    pass


class EmptyFile(IPGMError, ValueError):
    pass


class UnknownVertex(IPGMError, KeyError):
    pass


class AlreadyDeleted(IPGMError, KeyError):
    pass


class AlreadyMasked(IPGMError, KeyError):
    pass


class SelfLoop(IPGMError, ValueError):
    pass


class DegreeOverflow(IPGMError, ValueError):
    pass


class EmptyGraph(IPGMError, RuntimeError):
    pass


class AllMasked(EmptyGraph):
    """Every vertex in the graph is tombstoned."""


class DegeneratePosition(IPGMError, ValueError):
    """Points are (numerically) collinear or cocircular."""


class InsufficientData(IPGMError, ValueError):
    pass


class EmptyCluster(IPGMError, RuntimeError):
    pass


class MalformedLog(IPGMError, ValueError):
    pass


class DanglingDeleteReference(MalformedLog):
    pass


class TargetUnreachable(IPGMError, RuntimeError):
    def __init__(self, target, best_recall, k_cap):
        super().__init__(
            f"recall {best_recall:.4f} at k={k_cap} is below target {target}"
        )
        self.target = target
        self.best_recall = best_recall
        self.k_cap = k_cap

"""Exception types raised across the package.

Each maps to one failure class so the CLI can translate it into an exit code.
"""


class ZerotempError(Exception):
    """Base class for numeric failures."""


class InvalidArgument(ValueError):
    pass


class NoConvergence(ZerotempError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class InternalConsistencyError(ZerotempError):
    pass


class DegenerateCylinder(ZerotempError):
    pass


class InconsistentM(ZerotempError):
    pass


class EmptyOmega(ZerotempError):
    pass


class ConstructionFailure(ZerotempError):
    def __init__(self, message, node):
        super().__init__(f"{message} at node {node}")
        self.node = node


class IncompatibleBoundaryData(ZerotempError):
    def __init__(self, message, pair):
        super().__init__(f"{message}: pair {pair}")
        self.pair = pair


class InvalidSubaction(ZerotempError):
    pass


class PreconditionError(ZerotempError):
    pass

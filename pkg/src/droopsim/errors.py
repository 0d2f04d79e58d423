"""Exception types raised across the simulator."""


class DroopSimError(Exception):
    """Base class for all simulator errors."""


class InvalidParams(DroopSimError, ValueError):
    pass


class OutOfRange(DroopSimError, ValueError):
    pass


class NonConvergence(DroopSimError, RuntimeError):
    pass


class NoEquilibrium(DroopSimError, RuntimeError):
    pass


class InsufficientData(DroopSimError, ValueError):
    pass


class ConfigError(DroopSimError, ValueError):
    """Config parse or validation failure.

    ``key`` is the dotted path of the offending entry and ``line`` the
    1-based line in the source file when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where += f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


class RunAborted(DroopSimError, RuntimeError):
    """A run left its feasible region; carries the reason and time."""

    reason = "aborted"

    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


class Unstable(RunAborted):
    reason = "unstable"


class CapacityExhausted(RunAborted):
    reason = "capacity_exhausted"


class DcLinkCollapse(RunAborted):
    reason = "dc_link_collapse"


class NoFeasiblePoint(DroopSimError, RuntimeError):
    """No damping value passed the constraints.

    The (partially filled) report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)

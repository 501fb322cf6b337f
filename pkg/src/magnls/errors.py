"""Exception hierarchy shared by the solver modules and the CLI."""


class MagnlsError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InvalidParameter(MagnlsError, ValueError):
    exit_code = 2


class DimensionError(MagnlsError, ValueError):
    exit_code = 2


class ConfigError(MagnlsError):
    exit_code = 2

    def __init__(self, message, section=None, key=None):
        where = ""
        if section is not None:
            where = f"[{section}]" + (f" {key}" if key is not None else "")
            where += ": "
        super().__init__(where + message)
        self.section = section
        self.key = key


class SolverDivergence(MagnlsError):
    exit_code = 3

    def __init__(self, message, residual=float("nan"), result=None):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual
        self.result = result


class RunAborted(MagnlsError):
    """A monitored run stopped early; ``result`` holds everything up to ``time``."""

    reason = "aborted"

    def __init__(self, message, time, result=None):
        super().__init__(message)
        self.time = time
        self.result = result


class BlowupDetected(RunAborted):
    exit_code = 4
    reason = "blowup"


class LeakageDetected(RunAborted):
    exit_code = 5
    reason = "leakage"


class SymmetrizabilityError(MagnlsError, ValueError):
    exit_code = 2


class ResolutionError(MagnlsError):
    exit_code = 2

    def __init__(self, message, required_n):
        super().__init__(f"{message}; need at least n={required_n}")
        self.required_n = required_n


class CFLError(MagnlsError):
    exit_code = 3


class ShockDetected(RunAborted):
    """Gradient blowup of the WKB velocity field before the requested time."""

    exit_code = 4
    reason = "shock"

"""
Exception hierarchy shared by the library and the command handlers.

Handlers map input problems (ConfigError, DataFileError and the ValueError
family) to status 400 and numerical failures to status 500.
"""


class ProbeError(Exception):
    """Base class for every error raised by nanofiber_probe."""


class ConfigError(ProbeError):
    """Invalid configuration, anchored to a file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class DataFileError(ProbeError):
    """Malformed trace file; line is 1-based."""

    def __init__(self, message, path, line):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NoBoundStatesError(ProbeError, ValueError):
    """The ground potential supports no bound state."""


class GridError(ProbeError, ValueError):
    """Finite-difference grid too small or too coarse."""


class QuadratureError(ProbeError):
    def __init__(self, message, achieved):
        self.achieved = achieved
        super().__init__(f"{message} (achieved relative tolerance {achieved:.3e})")


class IntegrationError(ProbeError):
    """The adaptive ODE integrator gave up."""


class CalibrationError(ProbeError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class FitError(ProbeError):
    def __init__(self, reason, condition=None):
        self.reason = reason
        self.condition = condition
        detail = f" (condition estimate {condition:.3e})" if condition is not None else ""
        super().__init__(f"{reason}{detail}")

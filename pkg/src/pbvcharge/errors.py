"""Exception types shared across the package.

Each carries a short machine-readable ``code`` and the CLI exit status used
when it escapes to the command line.
"""


class PbvError(Exception):
    code = "ERROR"
    exit_code = 1


class DomainError(PbvError, ValueError):
    """Inputs outside an operation's domain."""

    code = "DOMAIN_ERROR"
    exit_code = 2


class ConfigError(PbvError, ValueError):
    code = "CONFIG_ERROR"
    exit_code = 2

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SequenceError(DomainError):
    """Pulse sequence structure or gating cannot be satisfied."""

    code = "SEQUENCE_ERROR"


class FitError(PbvError, RuntimeError):
    code = "FIT_ERROR"
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class OutputError(PbvError, OSError):
    code = "IO_ERROR"
    exit_code = 4

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")

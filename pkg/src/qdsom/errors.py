"""Exception types raised across the package."""


class QdsomError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(QdsomError, ValueError):
    """An argument has the wrong shape, range or value."""


class ContractViolation(QdsomError, RuntimeError):
    """A caller broke an operation's precondition (stale trace, bad action count...)."""


class ConfigurationError(QdsomError, ValueError):
    """An environment, scenario or CLI configuration is invalid."""


class IngestionError(QdsomError, ValueError):
    """A profile file does not match the documented CSV schema."""

    def __init__(self, path, message, row=None):
        self.path = str(path)
        self.row = row
        where = self.path if row is None else f"{self.path}, row {row}"
        super().__init__(f"{where}: {message}")

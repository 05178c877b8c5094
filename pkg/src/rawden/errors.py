"""Exception hierarchy. CLI exit codes hang off these classes."""


class RawdenError(Exception):
    exit_code = 1


class ConfigError(RawdenError):
    exit_code = 2


class ParameterError(ConfigError):
    pass


class FormatError(RawdenError):
    """Malformed or truncated file. ``offset`` is the byte position of the fault."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionError(RawdenError, ValueError):
    exit_code = 4

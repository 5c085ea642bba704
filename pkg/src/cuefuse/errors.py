"""Exception types raised across the package.

Errors split into two families so the CLI can map them to exit codes:
``ConfigError`` subclasses are usage/configuration problems (exit 1), every
other ``CuefuseError`` is a data problem (exit 2).
"""


class CuefuseError(Exception):
    pass


# -- data errors ------------------------------------------------------------

class ParseError(CuefuseError):
    """Malformed input. ``location`` names the line or field that failed."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class SchemaError(CuefuseError):
    pass


class DuplicateError(CuefuseError):
    pass


class NoHandsVisible(CuefuseError):
    pass


class NoMovement(CuefuseError):
    pass


class FaceNotFound(CuefuseError):
    pass


class InvalidRange(CuefuseError):
    pass


class BoundsError(CuefuseError):
    pass


class ShapeError(CuefuseError):
    pass


class EmptyError(CuefuseError):
    pass


class WindowError(CuefuseError):
    pass


class TrainError(CuefuseError):
    pass


class IoError(CuefuseError):
    pass


# -- configuration errors ---------------------------------------------------

class ConfigError(CuefuseError):
    pass


class WeightError(ConfigError):
    pass

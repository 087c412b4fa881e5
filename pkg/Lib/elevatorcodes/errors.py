import os


def _try_relative_path(path):
    # Try to return 'path' relative to the current working directory, or
    # return input 'path' if we can't make a relative path.
    # E.g. on Windows, os.path.relpath fails when path and "." are on
    # different mount points, C: or D: etc.
    try:
        return os.path.relpath(path)
    except (TypeError, ValueError):
        return path


class ElevatorError(Exception):
    """Base class for all elevatorcodes exceptions.

    This exception is intended to be chained to the original exception. The
    source trail points at the files or objects (codes, circuits, DEMs) the
    failure came from, innermost first.
    """

    exit_code = 1

    def __init__(self, msg, source=None):
        super().__init__(msg)
        self.msg = msg
        self.source_trail = [source]

    def __str__(self):
        trail = " -> ".join(
            f"{str(_try_relative_path(s))!r}"
            for s in reversed(self.source_trail)
            if s is not None
        )
        cause = str(self.__cause__) if self.__cause__ is not None else None

        message = ""
        if trail:
            message = f"In {trail}: "
        message += f"{self.msg}"
        if cause:
            message += f": {cause}"

        return message


class CodeFormatError(ElevatorError):
    """Malformed matrix, circuit, DEM or config text."""

    exit_code = 2


class InfeasibleError(ElevatorError):
    """The request is well-formed but cannot be computed or satisfied."""

    exit_code = 3


class FitError(InfeasibleError):
    pass


class InvariantError(ElevatorError):
    """An internal consistency check failed."""

    exit_code = 4

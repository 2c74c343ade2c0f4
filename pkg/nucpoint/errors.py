'''
File: errors.py
Project: nucpoint
File Created: Monday, 2nd March 2026 10:12:41 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Wednesday, 11th March 2026 4:37:02 pm
Modified By: koko (koko231125@gmail.com>)
'''


from nucpoint.rtypes import ErrorCategory


class NucPointError(Exception):
    r"""Base class of every error raised on purpose by nucpoint.

    Attributes:
        category (ErrorCategory): 
            The machine readable category reported by the command-line surface.
    """
    category: ErrorCategory = ErrorCategory.INTERNAL


class ShapeError(NucPointError, ValueError):
    """An array does not have the extent an operation requires."""
    category = ErrorCategory.SHAPE


class UsageError(NucPointError, RuntimeError):
    """An object is used out of order, e.g. backward before forward."""
    category = ErrorCategory.USAGE


class UnsatisfiableDensityError(NucPointError, RuntimeError):
    """Nuclei cannot be placed with the requested separation after the allowed retries."""
    category = ErrorCategory.DATA


class DataFormatError(NucPointError, ValueError):
    r"""A dataset file cannot be parsed.

    Attributes:
        path (str): 
            The offending file.
        line (int | None): 
            The 1-based line number, None when the whole file is unreadable.
    """
    category = ErrorCategory.DATA

    def __init__(self, path: str, message: str, line: int | None = None) -> None:
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class ConfigError(NucPointError, ValueError):
    r"""A configuration value is unknown, mistyped or invalid.

    Attributes:
        key (str): 
            The dotted key path, e.g. `detector.epochs`.
    """
    category = ErrorCategory.CONFIG

    def __init__(self, key: str, message: str) -> None:
        self.key = key
        super().__init__(f"{key}: {message}")


class MissingInputError(NucPointError, FileNotFoundError):
    """A dataset directory or checkpoint needed by a command does not exist."""
    category = ErrorCategory.INPUT


class FrozenViolationError(NucPointError, AssertionError):
    """The weights of a frozen encoder changed during downstream training."""
    category = ErrorCategory.INTERNAL

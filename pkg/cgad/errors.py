"""
errors.py
Exception hierarchy shared by every module.
Each error carries the process exit code the CLI maps it to:
  • 2  configuration / argument problems
  • 3  data problems (parse, dimension, format, missing inputs)
  • 4  numeric problems (non-finite loss, bad differentiation state)
"""

from __future__ import annotations


class CgadError(Exception):
    exit_code = 1


class ConfigError(CgadError):
    exit_code = 2


class ArgumentError(ConfigError, ValueError):
    pass


class DataError(CgadError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, msg: str, row: int | None = None, column: str | int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.row = row
        self.column = column


class DimensionError(DataError, ValueError):
    pass


class FormatError(DataError):
    pass


class NumericError(CgadError):
    exit_code = 4


class StateError(NumericError):
    pass

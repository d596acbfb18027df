"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class ChronoError(Exception):
    """Base class for all engine errors."""


class UnboundVariable(ChronoError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"name {self.name!r} is not bound"


class CellSyntaxError(ChronoError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.message = message
        self.line = line
        self.col = col


class CellRuntimeError(ChronoError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        where = f" at line {line}, column {col}" if line else ""
        super().__init__(f"{message}{where}")
        self.message = message
        self.line = line
        self.col = col


class MissingDependency(ChronoError):
    pass


class NotFlat(ChronoError):
    pass


class StorageError(ChronoError):
    pass


class CorruptBlob(StorageError):
    pass


class UnknownKey(StorageError, KeyError):
    pass


class UnknownTimestamp(ChronoError, KeyError):
    def __init__(self, t):
        super().__init__(t)
        self.t = t

    def __str__(self) -> str:
        return f"no checkpoint with id {self.t!r}"


class RestoreFailed(ChronoError):
    pass


class CorruptJournal(ChronoError):
    pass


class SpecError(ChronoError):
    pass

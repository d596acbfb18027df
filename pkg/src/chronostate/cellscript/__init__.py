"""CellScript: the small scripting language cells are written in."""

from .ast import CellProgram
from .interpreter import AccessLog, Interpreter, execute, replay_in_sandbox
from .parser import parse, tokenize
from .printer import to_source

__all__ = [
    "AccessLog",
    "CellProgram",
    "Interpreter",
    "execute",
    "parse",
    "replay_in_sandbox",
    "to_source",
    "tokenize",
]

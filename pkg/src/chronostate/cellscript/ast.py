"""Syntax tree for CellScript.

Positions are carried for error messages but excluded from equality, so
two parses of equivalent text compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Node:
    line: int = field(default=0, compare=False, kw_only=True, repr=False)
    col: int = field(default=0, compare=False, kw_only=True, repr=False)


# expressions ----------------------------------------------------------


@dataclass(frozen=True)
class Literal(Node):
    kind: str  # "int" | "float" | "str" | "bool" | "none"
    value: object


@dataclass(frozen=True)
class Name(Node):
    id: str


@dataclass(frozen=True)
class Attr(Node):
    obj: Expr
    field: str


@dataclass(frozen=True)
class Index(Node):
    obj: Expr
    index: Expr


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class UnaryOp(Node):
    op: str  # "-" | "not"
    operand: Expr


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class MapLit(Node):
    items: tuple[tuple[str, Expr], ...]


@dataclass(frozen=True)
class RecordLit(Node):
    fields: tuple[tuple[str, Expr], ...]


Expr = Union[Literal, Name, Attr, Index, BinOp, UnaryOp, Call, MapLit, RecordLit]


# statements -----------------------------------------------------------


@dataclass(frozen=True)
class Assign(Node):
    target: Expr  # Name | Attr | Index
    value: Expr


@dataclass(frozen=True)
class Del(Node):
    name: str


@dataclass(frozen=True)
class ExprStmt(Node):
    expr: Expr


@dataclass(frozen=True)
class For(Node):
    var: str
    start: Expr
    stop: Expr
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    body: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()


Stmt = Union[Assign, Del, ExprStmt, For, If]


BUILTINS = {
    # name: (min args, max args)
    "list": (0, None),
    "range_list": (1, 1),
    "opaque": (1, 1),
    "opaque_nondet": (1, 1),
    "rand": (0, 0),
    "len": (1, 1),
    "append": (2, 2),
    "remove_key": (2, 2),
}


@dataclass
class CellProgram:
    source: str
    statements: tuple[Stmt, ...]
    cell_id: int = 0

"""Pretty-printer producing source that re-parses to the same tree."""

from __future__ import annotations

from .ast import (
    Assign,
    Attr,
    BinOp,
    Call,
    CellProgram,
    Del,
    Expr,
    ExprStmt,
    For,
    If,
    Index,
    Literal,
    MapLit,
    Name,
    RecordLit,
    Stmt,
    UnaryOp,
)

# binding strength; higher binds tighter
_PREC = {
    "or": 1,
    "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}
_NOT_PREC = 3
_NEG_PREC = 7
_POSTFIX_PREC = 8


def quote(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\0":
            out.append("\\0")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, UnaryOp):
        return _NOT_PREC if e.op == "not" else _NEG_PREC
    return _POSTFIX_PREC + 1


def _wrap(e: Expr, need: int) -> str:
    s = expr_to_source(e)
    return f"({s})" if _prec(e) < need else s


def expr_to_source(e: Expr) -> str:
    if isinstance(e, Literal):
        if e.kind == "str":
            return quote(e.value)
        if e.kind == "bool":
            return "true" if e.value else "false"
        if e.kind == "none":
            return "none"
        return repr(e.value)
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Attr):
        return f"{_wrap(e.obj, _POSTFIX_PREC)}.{e.field}"
    if isinstance(e, Index):
        return f"{_wrap(e.obj, _POSTFIX_PREC)}[{expr_to_source(e.index)}]"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if p == 4:
            # comparisons do not chain
            return f"{_wrap(e.left, p + 1)} {e.op} {_wrap(e.right, p + 1)}"
        return f"{_wrap(e.left, p)} {e.op} {_wrap(e.right, p + 1)}"
    if isinstance(e, UnaryOp):
        if e.op == "not":
            return f"not {_wrap(e.operand, _NOT_PREC)}"
        return f"-{_wrap(e.operand, _NEG_PREC)}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(expr_to_source(a) for a in e.args)})"
    if isinstance(e, MapLit):
        return "map{" + ", ".join(f"{quote(k)}: {expr_to_source(v)}" for k, v in e.items) + "}"
    if isinstance(e, RecordLit):
        return "record{" + ", ".join(f"{k}: {expr_to_source(v)}" for k, v in e.fields) + "}"
    raise TypeError(f"not an expression: {e!r}")


def _block(stmts: tuple[Stmt, ...], indent: int) -> list[str]:
    lines: list[str] = []
    for s in stmts:
        lines.extend(stmt_lines(s, indent))
    return lines


def stmt_lines(s: Stmt, indent: int = 0) -> list[str]:
    pad = "    " * indent
    if isinstance(s, Assign):
        return [f"{pad}{expr_to_source(s.target)} = {expr_to_source(s.value)}"]
    if isinstance(s, Del):
        return [f"{pad}del {s.name}"]
    if isinstance(s, ExprStmt):
        return [f"{pad}{expr_to_source(s.expr)}"]
    if isinstance(s, For):
        head = f"{pad}for {s.var} in {expr_to_source(s.start)}..{expr_to_source(s.stop)} {{"
        return [head, *_block(s.body, indent + 1), f"{pad}}}"]
    if isinstance(s, If):
        lines = [f"{pad}if {expr_to_source(s.cond)} {{", *_block(s.body, indent + 1)]
        if s.orelse:
            lines.append(f"{pad}}} else {{")
            lines.extend(_block(s.orelse, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    raise TypeError(f"not a statement: {s!r}")


def to_source(program: CellProgram | tuple[Stmt, ...]) -> str:
    stmts = program.statements if isinstance(program, CellProgram) else program
    return "\n".join(_block(stmts, 0)) + ("\n" if stmts else "")

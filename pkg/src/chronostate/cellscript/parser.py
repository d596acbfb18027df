"""Lexer and recursive-descent parser for CellScript."""

from __future__ import annotations

import re
from typing import NamedTuple

from ..errors import CellSyntaxError
from .ast import (
    BUILTINS,
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

KEYWORDS = {"del", "for", "in", "if", "else", "true", "false", "none", "and", "or", "not", "map", "record"}


class Token(NamedTuple):
    type: str  # NAME, KW, INT, FLOAT, STR, OP, NL, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\.\.|==|!=|<=|>=|[-+*/%<>=.,:;()\[\]{}])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\", "r": "\r", "0": "\0"}


def _unescape(body: str, line: int, col: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise CellSyntaxError(f"unknown escape \\{nxt}", line, col + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise CellSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            tokens.append(Token("NL", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "name":
            tokens.append(Token("KW" if text in KEYWORDS else "NAME", text, line, col))
        elif kind == "int":
            tokens.append(Token("INT", text, line, col))
        elif kind == "float":
            tokens.append(Token("FLOAT", text, line, col))
        elif kind == "str":
            tokens.append(Token("STR", text, line, col))
        elif kind == "op":
            tokens.append(Token("OP", text, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


_CMP_OPS = {"==", "!=", "<", "<=", ">", ">="}


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, type_: str, text: str | None = None) -> bool:
        t = self.toks[self.i]
        return t.type == type_ and (text is None or t.text == text)

    def at_op(self, text: str) -> bool:
        return self.at("OP", text)

    def at_kw(self, text: str) -> bool:
        return self.at("KW", text)

    def expect(self, type_: str, text: str | None = None) -> Token:
        if not self.at(type_, text):
            t = self.tok
            want = text or type_
            got = t.text or t.type
            if t.type == "NL":
                got = "end of line"
            raise CellSyntaxError(f"expected {want!r}, got {got!r}", t.line, t.col)
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> CellSyntaxError:
        t = tok or self.tok
        return CellSyntaxError(message, t.line, t.col)

    def skip_separators(self) -> None:
        while self.at("NL") or self.at_op(";"):
            self.advance()

    def skip_newlines(self) -> None:
        while self.at("NL"):
            self.advance()

    # statements -------------------------------------------------------

    def parse_program(self) -> tuple[Stmt, ...]:
        stmts = self.statement_list(end=lambda: self.at("EOF"))
        self.expect("EOF")
        return stmts

    def statement_list(self, end) -> tuple[Stmt, ...]:
        stmts: list[Stmt] = []
        self.skip_separators()
        while not end():
            stmts.append(self.statement())
            if end():
                break
            if not (self.at("NL") or self.at_op(";")):
                raise self.error(f"expected end of statement, got {self.tok.text!r}")
            self.skip_separators()
        return tuple(stmts)

    def block(self) -> tuple[Stmt, ...]:
        self.expect("OP", "{")
        body = self.statement_list(end=lambda: self.at_op("}") or self.at("EOF"))
        self.expect("OP", "}")
        return body

    def statement(self) -> Stmt:
        t = self.tok
        pos = {"line": t.line, "col": t.col}
        if self.at_kw("del"):
            self.advance()
            name = self.expect("NAME").text
            return Del(name, **pos)
        if self.at_kw("for"):
            self.advance()
            var = self.expect("NAME").text
            self.expect("KW", "in")
            start = self.expression()
            self.expect("OP", "..")
            stop = self.expression()
            body = self.block()
            return For(var, start, stop, body, **pos)
        if self.at_kw("if"):
            return self.if_statement()
        expr = self.expression()
        if self.at_op("="):
            eq = self.advance()
            if not isinstance(expr, (Name, Attr, Index)):
                raise self.error("cannot assign to expression", eq)
            value = self.expression()
            return Assign(expr, value, **pos)
        return ExprStmt(expr, **pos)

    def if_statement(self) -> If:
        t = self.expect("KW", "if")
        cond = self.expression()
        body = self.block()
        orelse: tuple[Stmt, ...] = ()
        # allow `else` on the line after the closing brace
        save = self.i
        self.skip_newlines()
        if self.at_kw("else"):
            self.advance()
            if self.at_kw("if"):
                orelse = (self.if_statement(),)
            else:
                orelse = self.block()
        else:
            self.i = save
        return If(cond, body, orelse, line=t.line, col=t.col)

    # expressions ------------------------------------------------------

    def expression(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.at_kw("or"):
            t = self.advance()
            left = BinOp("or", left, self.and_expr(), line=t.line, col=t.col)
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at_kw("and"):
            t = self.advance()
            left = BinOp("and", left, self.not_expr(), line=t.line, col=t.col)
        return left

    def not_expr(self) -> Expr:
        if self.at_kw("not"):
            t = self.advance()
            return UnaryOp("not", self.not_expr(), line=t.line, col=t.col)
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.sum()
        if self.tok.type == "OP" and self.tok.text in _CMP_OPS:
            t = self.advance()
            left = BinOp(t.text, left, self.sum(), line=t.line, col=t.col)
            if self.tok.type == "OP" and self.tok.text in _CMP_OPS:
                raise self.error("comparisons cannot be chained")
        return left

    def sum(self) -> Expr:
        left = self.term()
        while self.at_op("+") or self.at_op("-"):
            t = self.advance()
            left = BinOp(t.text, left, self.term(), line=t.line, col=t.col)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.at_op("*") or self.at_op("/") or self.at_op("%"):
            t = self.advance()
            left = BinOp(t.text, left, self.unary(), line=t.line, col=t.col)
        return left

    def unary(self) -> Expr:
        if self.at_op("-"):
            t = self.advance()
            return UnaryOp("-", self.unary(), line=t.line, col=t.col)
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.atom()
        while True:
            if self.at_op("."):
                t = self.advance()
                name = self.expect("NAME").text
                expr = Attr(expr, name, line=t.line, col=t.col)
            elif self.at_op("["):
                t = self.advance()
                index = self.expression()
                self.expect("OP", "]")
                expr = Index(expr, index, line=t.line, col=t.col)
            else:
                return expr

    def atom(self) -> Expr:
        t = self.tok
        pos = {"line": t.line, "col": t.col}
        if t.type == "INT":
            self.advance()
            return Literal("int", int(t.text), **pos)
        if t.type == "FLOAT":
            self.advance()
            return Literal("float", float(t.text), **pos)
        if t.type == "STR":
            self.advance()
            return Literal("str", _unescape(t.text[1:-1], t.line, t.col), **pos)
        if t.type == "KW":
            if t.text in ("true", "false"):
                self.advance()
                return Literal("bool", t.text == "true", **pos)
            if t.text == "none":
                self.advance()
                return Literal("none", None, **pos)
            if t.text == "map":
                self.advance()
                items = self.keyed_items(string_keys=True)
                return MapLit(items, **pos)
            if t.text == "record":
                self.advance()
                fields = self.keyed_items(string_keys=False)
                return RecordLit(fields, **pos)
            raise self.error(f"unexpected keyword {t.text!r}")
        if t.type == "NAME":
            self.advance()
            if self.at_op("("):
                if t.text not in BUILTINS:
                    raise self.error(f"unknown function {t.text!r}", t)
                args = self.call_args()
                lo, hi = BUILTINS[t.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise self.error(f"{t.text}() takes {lo if lo == hi else f'{lo}+'} argument(s), got {len(args)}", t)
                return Call(t.text, args, **pos)
            return Name(t.text, **pos)
        if self.at_op("("):
            self.advance()
            self.skip_newlines()
            expr = self.expression()
            self.skip_newlines()
            self.expect("OP", ")")
            return expr
        if t.type == "EOF":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {t.text!r}" if t.type != "NL" else "unexpected end of line")

    def call_args(self) -> tuple[Expr, ...]:
        self.expect("OP", "(")
        args: list[Expr] = []
        self.skip_newlines()
        while not self.at_op(")"):
            args.append(self.expression())
            self.skip_newlines()
            if not self.at_op(","):
                break
            self.advance()
            self.skip_newlines()
        self.expect("OP", ")")
        return tuple(args)

    def keyed_items(self, string_keys: bool) -> tuple[tuple[str, Expr], ...]:
        self.expect("OP", "{")
        items: list[tuple[str, Expr]] = []
        seen: set[str] = set()
        self.skip_newlines()
        while not self.at_op("}"):
            kt = self.tok
            if string_keys:
                key = _unescape(self.expect("STR").text[1:-1], kt.line, kt.col)
            else:
                key = self.expect("NAME").text
            if key in seen:
                raise self.error(f"duplicate key {key!r}", kt)
            seen.add(key)
            self.expect("OP", ":")
            self.skip_newlines()
            items.append((key, self.expression()))
            self.skip_newlines()
            if not self.at_op(","):
                break
            self.advance()
            self.skip_newlines()
        self.expect("OP", "}")
        return tuple(items)


def parse(source: str, cell_id: int = 0) -> CellProgram:
    """Parse CellScript source; raises CellSyntaxError with a position."""
    return CellProgram(source, Parser(source).parse_program(), cell_id)

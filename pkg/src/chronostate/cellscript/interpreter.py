"""Tree-walking evaluator for CellScript with namespace access logging.

Every fetch, assignment, and deletion of a root name is recorded in the
cell's :class:`AccessLog`; the logs are live (a name in an untaken branch
is never recorded), and they are what the detector prunes on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable

from ..component import Component, extract, materialize
from ..errors import CellRuntimeError, MissingDependency, UnboundVariable
from ..heap import KEYED_KINDS, Kind, State
from .ast import (
    Assign,
    Attr,
    BinOp,
    Call,
    CellProgram,
    Del,
    ExprStmt,
    For,
    If,
    Index,
    Literal,
    MapLit,
    Name,
    RecordLit,
    UnaryOp,
)

MAX_STEPS = 2_000_000
MAX_STR = 64 * 1024 * 1024
MAX_RANGE = 10_000_000


@dataclass
class AccessLog:
    read_names: set[str] = field(default_factory=set)
    written_names: set[str] = field(default_factory=set)
    deleted_names: set[str] = field(default_factory=set)
    nondeterministic: bool = False
    error: CellRuntimeError | None = None
    result: int | None = None  # object id of the last expression statement

    @property
    def accessed(self) -> set[str]:
        return self.read_names | self.written_names | self.deleted_names


_LITERAL_KIND = {"int": Kind.INT, "float": Kind.FLOAT, "str": Kind.STR, "bool": Kind.BOOL, "none": Kind.NONE}
_NUMERIC = (Kind.INT, Kind.FLOAT, Kind.BOOL)


def _root_name(expr) -> str | None:
    while isinstance(expr, (Attr, Index)):
        expr = expr.obj
    return expr.id if isinstance(expr, Name) else None


class Interpreter:
    """Executes one program against one state, filling one access log."""

    def __init__(self, state: State, rng: random.Random | None = None):
        self.state = state
        self.rng = rng or random.Random(0)
        self.log = AccessLog()
        self.steps = 0
        self._eval = {
            Literal: self._literal,
            Name: self._name,
            Attr: self._attr,
            Index: self._index,
            BinOp: self._binop,
            UnaryOp: self._unary,
            Call: self._call,
            MapLit: self._maplit,
            RecordLit: self._recordlit,
        }
        self._exec = {
            Assign: self._assign,
            Del: self._del,
            ExprStmt: self._exprstmt,
            For: self._for,
            If: self._if,
        }

    def fail(self, node, message: str) -> CellRuntimeError:
        return CellRuntimeError(message, node.line, node.col)

    def run(self, program: CellProgram) -> AccessLog:
        try:
            self.block(program.statements)
        except CellRuntimeError as exc:
            self.log.error = exc
        except RecursionError:
            self.log.error = CellRuntimeError("expression nesting too deep")
        return self.log

    # statements -------------------------------------------------------

    def block(self, stmts) -> None:
        table = self._exec
        for s in stmts:
            self.steps += 1
            if self.steps > MAX_STEPS:
                raise self.fail(s, "step limit exceeded")
            table[type(s)](s)

    def _assign(self, s: Assign) -> None:
        value = self.eval(s.value)
        target = s.target
        if isinstance(target, Name):
            self.state.bindings[target.id] = value
            self.log.written_names.add(target.id)
            return
        container = self.state.objects[self.eval(target.obj)]
        root = _root_name(target.obj)
        if isinstance(target, Attr):
            if container.kind is not Kind.RECORD:
                raise self.fail(target, f"cannot set field {target.field!r} on {container.kind.value}")
            container.children[target.field] = value
        else:
            key = self.state.objects[self.eval(target.index)]
            if container.kind is Kind.LIST:
                i = self._list_index(target, container, key)
                container.children[i] = value
            elif container.kind is Kind.MAP:
                if key.kind is not Kind.STR:
                    raise self.fail(target, "map keys must be strings")
                container.children[key.value] = value
            else:
                raise self.fail(target, f"cannot index-assign into {container.kind.value}")
        if root is not None:
            self.log.written_names.add(root)

    def _del(self, s: Del) -> None:
        if s.name not in self.state.bindings:
            self.log.deleted_names.add(s.name)
            raise self.fail(s, f"name {s.name!r} is not bound")
        del self.state.bindings[s.name]
        self.log.deleted_names.add(s.name)

    def _exprstmt(self, s: ExprStmt) -> None:
        self.log.result = self.eval(s.expr)

    def _for(self, s: For) -> None:
        start = self._int_value(s.start)
        stop = self._int_value(s.stop)
        if stop - start > MAX_RANGE:
            raise self.fail(s, "loop range too large")
        state = self.state
        for i in range(start, stop):
            state.bindings[s.var] = state.alloc(Kind.INT, i)
            self.log.written_names.add(s.var)
            self.block(s.body)

    def _if(self, s: If) -> None:
        if self.truthy(self.eval(s.cond)):
            self.block(s.body)
        else:
            self.block(s.orelse)

    # expressions ------------------------------------------------------

    def eval(self, e) -> int:
        return self._eval[type(e)](e)

    def _literal(self, e: Literal) -> int:
        return self.state.alloc(_LITERAL_KIND[e.kind], e.value)

    def _name(self, e: Name) -> int:
        self.log.read_names.add(e.id)
        try:
            return self.state.bindings[e.id]
        except KeyError:
            raise self.fail(e, f"name {e.id!r} is not bound") from None

    def _attr(self, e: Attr) -> int:
        obj = self.state.objects[self.eval(e.obj)]
        if obj.kind is not Kind.RECORD:
            raise self.fail(e, f"{obj.kind.value} has no fields")
        try:
            return obj.children[e.field]
        except KeyError:
            raise self.fail(e, f"record has no field {e.field!r}") from None

    def _list_index(self, e, container, key) -> int:
        if key.kind is not Kind.INT:
            raise self.fail(e, "list indices must be ints")
        i = key.value
        n = len(container.children)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise self.fail(e, f"list index {key.value} out of range")
        return i

    def _index(self, e: Index) -> int:
        obj = self.state.objects[self.eval(e.obj)]
        key = self.state.objects[self.eval(e.index)]
        if obj.kind is Kind.LIST:
            return obj.children[self._list_index(e, obj, key)]
        if obj.kind is Kind.MAP:
            if key.kind is not Kind.STR:
                raise self.fail(e, "map keys must be strings")
            try:
                return obj.children[key.value]
            except KeyError:
                raise self.fail(e, f"map has no key {key.value!r}") from None
        raise self.fail(e, f"{obj.kind.value} is not indexable")

    def truthy(self, oid: int) -> bool:
        o = self.state.objects[oid]
        if o.kind in (Kind.INT, Kind.FLOAT, Kind.BOOL, Kind.STR):
            return bool(o.value)
        if o.kind is Kind.NONE:
            return False
        if o.children is not None:
            return bool(o.children)
        return True

    def _bool(self, v: bool) -> int:
        return self.state.alloc(Kind.BOOL, v)

    def _binop(self, e: BinOp) -> int:
        op = e.op
        if op == "and":
            left = self.eval(e.left)
            return self._bool(self.truthy(left) and self.truthy(self.eval(e.right)))
        if op == "or":
            left = self.eval(e.left)
            return self._bool(self.truthy(left) or self.truthy(self.eval(e.right)))
        objects = self.state.objects
        a = objects[self.eval(e.left)]
        b = objects[self.eval(e.right)]
        if op in ("==", "!="):
            same = self._equal(a, b)
            return self._bool(same if op == "==" else not same)
        ka, kb = a.kind, b.kind
        if op in ("<", "<=", ">", ">="):
            if not ((ka in _NUMERIC and kb in _NUMERIC) or (ka is Kind.STR and kb is Kind.STR)):
                raise self.fail(e, f"cannot compare {ka.value} and {kb.value}")
            x, y = a.value, b.value
            r = x < y if op == "<" else x <= y if op == "<=" else x > y if op == ">" else x >= y
            return self._bool(r)
        if ka is Kind.STR and kb is Kind.STR and op == "+":
            if len(a.value) + len(b.value) > MAX_STR:
                raise self.fail(e, "string too long")
            return self.state.alloc(Kind.STR, a.value + b.value)
        if ka is Kind.STR and kb is Kind.INT and op == "*":
            if len(a.value) * max(b.value, 0) > MAX_STR:
                raise self.fail(e, "string too long")
            return self.state.alloc(Kind.STR, a.value * b.value)
        if ka is Kind.LIST and kb is Kind.LIST and op == "+":
            return self.state.alloc(Kind.LIST, None, a.children + b.children)
        if ka not in _NUMERIC or kb not in _NUMERIC:
            raise self.fail(e, f"unsupported operand kinds for {op}: {ka.value} and {kb.value}")
        x, y = a.value, b.value
        is_float = ka is Kind.FLOAT or kb is Kind.FLOAT
        try:
            if op == "+":
                r = x + y
            elif op == "-":
                r = x - y
            elif op == "*":
                r = x * y
            elif op == "/":
                r = x / y
                is_float = True
            else:
                r = x % y
        except ZeroDivisionError:
            raise self.fail(e, "division by zero") from None
        except OverflowError:
            raise self.fail(e, "numeric overflow") from None
        if is_float:
            return self.state.alloc(Kind.FLOAT, float(r))
        r = int(r)
        if r.bit_length() > 4096:
            raise self.fail(e, "integer too large")
        return self.state.alloc(Kind.INT, r)

    @staticmethod
    def _equal(a, b) -> bool:
        if a.kind in _NUMERIC and b.kind in _NUMERIC:
            return a.value == b.value
        if a.kind is Kind.STR and b.kind is Kind.STR:
            return a.value == b.value
        if a.kind is Kind.NONE and b.kind is Kind.NONE:
            return True
        # containers and opaque values compare by identity
        return a.id == b.id

    def _unary(self, e: UnaryOp) -> int:
        v = self.eval(e.operand)
        if e.op == "not":
            return self._bool(not self.truthy(v))
        o = self.state.objects[v]
        if o.kind is Kind.INT or o.kind is Kind.BOOL:
            return self.state.alloc(Kind.INT, -int(o.value))
        if o.kind is Kind.FLOAT:
            return self.state.alloc(Kind.FLOAT, -o.value)
        raise self.fail(e, f"cannot negate {o.kind.value}")

    def _maplit(self, e: MapLit) -> int:
        children = {k: self.eval(v) for k, v in e.items}
        return self.state.alloc(Kind.MAP, None, children)

    def _recordlit(self, e: RecordLit) -> int:
        children = {k: self.eval(v) for k, v in e.fields}
        return self.state.alloc(Kind.RECORD, None, children)

    def _int_value(self, e) -> int:
        o = self.state.objects[self.eval(e)]
        if o.kind is not Kind.INT:
            raise self.fail(e, f"expected int, got {o.kind.value}")
        return o.value

    def _str_value(self, e) -> str:
        o = self.state.objects[self.eval(e)]
        if o.kind is not Kind.STR:
            raise self.fail(e, f"expected str, got {o.kind.value}")
        return o.value

    def _call(self, e: Call) -> int:
        f = e.func
        state = self.state
        if f == "list":
            return state.alloc(Kind.LIST, None, [self.eval(a) for a in e.args])
        if f == "range_list":
            n = self._int_value(e.args[0])
            if n > MAX_RANGE:
                raise self.fail(e, "range too large")
            return state.alloc(Kind.LIST, None, [state.alloc(Kind.INT, i) for i in range(n)])
        if f == "len":
            o = state.objects[self.eval(e.args[0])]
            if o.kind is Kind.STR:
                return state.alloc(Kind.INT, len(o.value))
            if o.children is None:
                raise self.fail(e, f"{o.kind.value} has no length")
            return state.alloc(Kind.INT, len(o.children))
        if f == "opaque":
            return state.alloc(Kind.OPAQUE, self._str_value(e.args[0]), None, True)
        if f == "opaque_nondet":
            self.log.nondeterministic = True
            return state.alloc(Kind.OPAQUE, self._str_value(e.args[0]), None, False)
        if f == "rand":
            self.log.nondeterministic = True
            return state.alloc(Kind.FLOAT, self.rng.random())
        if f == "append":
            target = state.objects[self.eval(e.args[0])]
            value = self.eval(e.args[1])
            if target.kind is not Kind.LIST:
                raise self.fail(e, f"cannot append to {target.kind.value}")
            target.children.append(value)
            self._mark_written(e.args[0])
            return state.alloc(Kind.NONE)
        if f == "remove_key":
            target = state.objects[self.eval(e.args[0])]
            key = self._str_value(e.args[1])
            if target.kind not in KEYED_KINDS:
                raise self.fail(e, f"cannot remove key from {target.kind.value}")
            if key not in target.children:
                raise self.fail(e, f"no key {key!r}")
            del target.children[key]
            self._mark_written(e.args[0])
            return state.alloc(Kind.NONE)
        raise self.fail(e, f"unknown function {f!r}")

    def _mark_written(self, expr) -> None:
        root = _root_name(expr)
        if root is not None:
            self.log.written_names.add(root)


def execute(program: CellProgram, state: State, rng: random.Random | None = None) -> AccessLog:
    """Run ``program`` against ``state`` in place.

    Runtime errors stop execution but do not roll back; the returned log
    carries the error and every access made before it.
    """
    return Interpreter(state, rng).run(program)


def replay_in_sandbox(
    program: CellProgram,
    inputs: Iterable[Component],
    outputs: Iterable[Iterable[str]],
    required: Iterable[str] = (),
    rng: random.Random | None = None,
) -> tuple[dict[tuple[str, ...], Component], AccessLog]:
    """Re-run a recorded cell on restored inputs in a scratch state.

    Returns the requested output components (keyed by sorted member tuple)
    and the replay's access log. The caller's live state is never touched.
    """
    scratch = State()
    for comp in inputs:
        materialize(scratch, comp)
    missing = sorted(n for n in required if n not in scratch.bindings)
    if missing:
        raise MissingDependency("replay inputs missing: " + ", ".join(missing))
    log = execute(program, scratch, rng)
    result = {}
    for members in outputs:
        key = tuple(sorted(members))
        try:
            result[key] = extract(scratch, key)
        except KeyError:
            unbound = [n for n in key if n not in scratch.bindings]
            raise UnboundVariable(unbound[0]) from None
    return result, log

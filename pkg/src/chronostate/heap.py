"""Session state: named roots over a heap of possibly aliased objects.

Every value, primitives included, is a heap object with a stable identity.
Binding ``y = x`` therefore shares the object, which is how aliasing (and
with it Co-variable merging) arises.
"""

from __future__ import annotations

import itertools
import math
from enum import Enum
from typing import Iterable, Iterator

from .errors import UnboundVariable


class Kind(str, Enum):
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    STR = "str"
    NONE = "none"
    LIST = "list"
    MAP = "map"
    RECORD = "record"
    OPAQUE = "opaque"


PRIMITIVE_KINDS = frozenset({Kind.INT, Kind.FLOAT, Kind.BOOL, Kind.STR, Kind.NONE})
KEYED_KINDS = frozenset({Kind.MAP, Kind.RECORD})
CONTAINER_KINDS = frozenset({Kind.LIST, Kind.MAP, Kind.RECORD})


class HeapObject:
    """One heap cell.

    ``value`` holds the payload of primitives and the tag of opaque objects;
    ``children`` is a list of ids for lists and a str-keyed dict of ids for
    maps and records.
    """

    __slots__ = ("id", "kind", "value", "children", "deterministic")

    def __init__(self, oid: int, kind: Kind, value=None, children=None, deterministic: bool = True):
        self.id = oid
        self.kind = kind
        self.value = value
        self.children = children
        self.deterministic = deterministic

    @property
    def serializable(self) -> bool:
        return self.kind is not Kind.OPAQUE

    def child_ids(self) -> Iterable[int]:
        c = self.children
        if c is None:
            return ()
        if self.kind is Kind.LIST:
            return c
        return c.values()

    def __repr__(self) -> str:
        if self.kind in PRIMITIVE_KINDS:
            return f"<{self.kind.value}#{self.id} {self.value!r}>"
        if self.kind is Kind.OPAQUE:
            return f"<opaque#{self.id} {self.value!r}>"
        return f"<{self.kind.value}#{self.id} {self.children!r}>"


class State:
    """A namespace plus the heap it refers to.

    Object ids come from a per-state counter and are never reused.
    """

    def __init__(self) -> None:
        self.objects: dict[int, HeapObject] = {}
        self.bindings: dict[str, int] = {}
        self._ids = itertools.count(1)

    # allocation -------------------------------------------------------

    def alloc(self, kind: Kind, value=None, children=None, deterministic: bool = True) -> int:
        oid = next(self._ids)
        self.objects[oid] = HeapObject(oid, kind, value, children, deterministic)
        return oid

    def new_int(self, v: int) -> int:
        return self.alloc(Kind.INT, v)

    def new_str(self, v: str) -> int:
        return self.alloc(Kind.STR, v)

    # namespace --------------------------------------------------------

    def bind(self, name: str, oid: int) -> None:
        if oid not in self.objects:
            raise KeyError(f"object {oid} does not exist")
        self.bindings[name] = oid

    def lookup(self, name: str) -> HeapObject:
        try:
            return self.objects[self.bindings[name]]
        except KeyError:
            raise UnboundVariable(name) from None

    def names(self) -> list[str]:
        return sorted(self.bindings)

    def __contains__(self, name: str) -> bool:
        return name in self.bindings

    # reachability -----------------------------------------------------

    def reachable_from(self, roots: Iterable[int]) -> set[int]:
        objects = self.objects
        seen: set[int] = set()
        stack = list(roots)
        while stack:
            oid = stack.pop()
            if oid in seen:
                continue
            seen.add(oid)
            obj = objects[oid]
            if obj.children is not None:
                stack.extend(obj.child_ids())
        return seen

    def reachable(self, name: str) -> set[int]:
        if name not in self.bindings:
            raise UnboundVariable(name)
        return self.reachable_from((self.bindings[name],))

    def live_ids(self) -> set[int]:
        return self.reachable_from(self.bindings.values())

    def collect(self) -> int:
        """Drop objects unreachable from any binding; returns how many."""
        live = self.live_ids()
        dead = [oid for oid in self.objects if oid not in live]
        for oid in dead:
            del self.objects[oid]
        return len(dead)

    def delete_binding(self, name: str) -> None:
        if name not in self.bindings:
            raise UnboundVariable(name)
        del self.bindings[name]

    def copy(self) -> State:
        """Independent copy with identical ids (used by oracles)."""
        other = State()
        for oid, o in self.objects.items():
            ch = o.children
            if ch is not None:
                ch = list(ch) if o.kind is Kind.LIST else dict(ch)
            other.objects[oid] = HeapObject(oid, o.kind, o.value, ch, o.deterministic)
        other.bindings = dict(self.bindings)
        other._ids = itertools.count(max(self.objects, default=0) + 1)
        return other

    def __iter__(self) -> Iterator[str]:
        return iter(self.bindings)

    def __repr__(self) -> str:
        return f"State({len(self.bindings)} names, {len(self.objects)} objects)"


def reachable(state: State, name: str) -> set[int]:
    return state.reachable(name)


def delete_binding(state: State, name: str) -> None:
    state.delete_binding(name)


def _same_primitive(a: HeapObject, b: HeapObject) -> bool:
    va, vb = a.value, b.value
    if a.kind is Kind.FLOAT:
        if math.isnan(va) or math.isnan(vb):
            return math.isnan(va) and math.isnan(vb)
        # distinguishes 0.0 from -0.0
        return va == vb and math.copysign(1.0, va) == math.copysign(1.0, vb)
    return va == vb


def deep_equal(a: State, b: State, names: Iterable[str] | None = None) -> bool:
    """Structural equality of two states up to renaming of object ids.

    The match is a bijection between reachable objects, so aliasing must
    agree as well as values. With ``names`` only those bindings are compared
    (each must be bound on both sides).
    """
    if names is None:
        if a.bindings.keys() != b.bindings.keys():
            return False
        names = a.bindings.keys()
    else:
        names = list(names)
        if any(n not in a.bindings or n not in b.bindings for n in names):
            return False
    fwd: dict[int, int] = {}
    back: dict[int, int] = {}
    stack = [(a.bindings[n], b.bindings[n]) for n in names]
    oa, ob = a.objects, b.objects
    while stack:
        ia, ib = stack.pop()
        seen_a = fwd.get(ia)
        seen_b = back.get(ib)
        if seen_a is not None or seen_b is not None:
            if seen_a != ib or seen_b != ia:
                return False
            continue
        fwd[ia] = ib
        back[ib] = ia
        x, y = oa[ia], ob[ib]
        if x.kind is not y.kind:
            return False
        k = x.kind
        if k in PRIMITIVE_KINDS:
            if not _same_primitive(x, y):
                return False
        elif k is Kind.OPAQUE:
            if x.value != y.value or x.deterministic != y.deterministic:
                return False
        elif k is Kind.LIST:
            if len(x.children) != len(y.children):
                return False
            stack.extend(zip(x.children, y.children))
        else:
            if x.children.keys() != y.children.keys():
                return False
            stack.extend((x.children[key], y.children[key]) for key in x.children)
    return True

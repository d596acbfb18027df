"""Flat, id-free representation of a Co-variable's object component.

A component is a table of nodes addressed by local index plus the root
bindings into it. Nodes are numbered by breadth-first discovery from the
roots (names sorted, list children positional, keyed children in key
order), so isomorphic components always produce the same table and the
same bytes. Shared objects appear once and are referenced by index, which
is what keeps aliasing intact across a round trip.

Byte layout (little-endian, version 0x01)::

    u8   version
    u32  root count, then per root (sorted by name): str name, u32 index
    u32  node count, then per node: u8 kind code, payload
         int:    u32 length, two's-complement bytes
         float:  f64
         bool:   u8
         str:    u32 length, utf-8 bytes
         none:   -
         list:   u32 count, u32 child index each
         map/record: u32 count, (str key, u32 child index) each, keys sorted
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import CorruptBlob
from .heap import KEYED_KINDS, Kind, State

FORMAT_VERSION = 1

_KIND_CODE = {
    Kind.INT: 1,
    Kind.FLOAT: 2,
    Kind.BOOL: 3,
    Kind.STR: 4,
    Kind.NONE: 5,
    Kind.LIST: 6,
    Kind.MAP: 7,
    Kind.RECORD: 8,
}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


class Unserializable:
    """Returned by :func:`encode` when a component cannot be stored."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self) -> str:
        return f"Unserializable({self.reason!r})"

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Component:
    """Node table plus root bindings.

    Each node is ``(kind, value, children)``: ``value`` is the primitive
    payload (for opaque nodes a ``(tag, deterministic)`` pair); ``children``
    is a tuple of indices for lists, a tuple of ``(key, index)`` pairs in key
    order for maps and records, and ``None`` otherwise.
    """

    roots: tuple[tuple[str, int], ...]
    nodes: tuple[tuple, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.roots)

    def has_opaque(self) -> bool:
        return any(n[0] is Kind.OPAQUE for n in self.nodes)

    def kinds(self) -> set[Kind]:
        return {n[0] for n in self.nodes}

    def opaque_tags(self) -> set[str]:
        return {n[1][0] for n in self.nodes if n[0] is Kind.OPAQUE}

    def to_bytes(self) -> bytes:
        if self.has_opaque():
            raise ValueError("component contains opaque objects")
        out = bytearray()
        out.append(FORMAT_VERSION)
        out += _U32.pack(len(self.roots))
        for name, idx in self.roots:
            _put_str(out, name)
            out += _U32.pack(idx)
        out += _U32.pack(len(self.nodes))
        for kind, value, children in self.nodes:
            out.append(_KIND_CODE[kind])
            if kind is Kind.INT:
                raw = value.to_bytes((value.bit_length() + 8) // 8 or 1, "little", signed=True)
                out += _U32.pack(len(raw))
                out += raw
            elif kind is Kind.FLOAT:
                out += _F64.pack(value)
            elif kind is Kind.BOOL:
                out.append(1 if value else 0)
            elif kind is Kind.STR:
                _put_str(out, value)
            elif kind is Kind.LIST:
                out += _U32.pack(len(children))
                out += struct.pack(f"<{len(children)}I", *children)
            elif kind in KEYED_KINDS:
                out += _U32.pack(len(children))
                for key, idx in children:
                    _put_str(out, key)
                    out += _U32.pack(idx)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Component:
        try:
            return _decode(memoryview(data))
        except CorruptBlob:
            raise
        except (struct.error, IndexError, UnicodeDecodeError, ValueError, KeyError) as exc:
            raise CorruptBlob(f"undecodable component: {exc}") from None


def _put_str(out: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    out += _U32.pack(len(raw))
    out += raw


def _decode(buf: memoryview) -> Component:
    pos = 0

    def u32() -> int:
        nonlocal pos
        (v,) = _U32.unpack_from(buf, pos)
        pos += 4
        return v

    def string() -> str:
        nonlocal pos
        n = u32()
        if pos + n > len(buf):
            raise CorruptBlob("string runs past end of blob")
        s = bytes(buf[pos:pos + n]).decode("utf-8")
        pos += n
        return s

    if len(buf) < 1 or buf[0] != FORMAT_VERSION:
        raise CorruptBlob("bad format version")
    pos = 1
    roots = []
    for _ in range(u32()):
        name = string()
        roots.append((name, u32()))
    count = u32()
    nodes = []
    for _ in range(count):
        code = buf[pos]
        pos += 1
        kind = _CODE_KIND[code]
        value = None
        children = None
        if kind is Kind.INT:
            n = u32()
            if pos + n > len(buf):
                raise CorruptBlob("int runs past end of blob")
            value = int.from_bytes(buf[pos:pos + n], "little", signed=True)
            pos += n
        elif kind is Kind.FLOAT:
            (value,) = _F64.unpack_from(buf, pos)
            pos += 8
        elif kind is Kind.BOOL:
            value = bool(buf[pos])
            pos += 1
        elif kind is Kind.STR:
            value = string()
        elif kind is Kind.LIST:
            n = u32()
            children = struct.unpack_from(f"<{n}I", buf, pos)
            pos += 4 * n
        elif kind in KEYED_KINDS:
            items = []
            for _ in range(u32()):
                key = string()
                items.append((key, u32()))
            children = tuple(items)
        nodes.append((kind, value, children))
    if pos != len(buf):
        raise CorruptBlob("trailing bytes after component")
    for kind, _, children in nodes:
        if children:
            idxs = children if kind is Kind.LIST else (i for _, i in children)
            if any(i >= count for i in idxs):
                raise CorruptBlob("child index out of range")
    if any(i >= count for _, i in roots):
        raise CorruptBlob("root index out of range")
    return Component(tuple(roots), tuple(nodes))


def extract(state: State, names: Iterable[str]) -> Component:
    """Snapshot the objects reachable from ``names`` into a component."""
    names = sorted(names)
    objects = state.objects
    index: dict[int, int] = {}
    order: list[int] = []
    queue: deque[int] = deque()

    def visit(oid: int) -> int:
        i = index.get(oid)
        if i is None:
            i = index[oid] = len(order)
            order.append(oid)
            queue.append(oid)
        return i

    roots = tuple((n, visit(state.bindings[n])) for n in names)
    children_of: dict[int, object] = {}
    while queue:
        oid = queue.popleft()
        o = objects[oid]
        ch = o.children
        if ch is None:
            continue
        if o.kind is Kind.LIST:
            children_of[oid] = tuple(visit(c) for c in ch)
        else:
            children_of[oid] = tuple((k, visit(ch[k])) for k in sorted(ch))
    nodes = []
    for oid in order:
        o = objects[oid]
        if o.kind is Kind.OPAQUE:
            nodes.append((o.kind, (o.value, o.deterministic), None))
        else:
            nodes.append((o.kind, o.value, children_of.get(oid)))
    return Component(roots, tuple(nodes))


def materialize(state: State, comp: Component) -> dict[str, int]:
    """Allocate the component into ``state`` with fresh ids and bind its roots."""
    ids = []
    for kind, value, _ in comp.nodes:
        if kind is Kind.OPAQUE:
            tag, det = value
            ids.append(state.alloc(kind, tag, None, det))
        else:
            ids.append(state.alloc(kind, value))
    objects = state.objects
    for oid, (kind, _, children) in zip(ids, comp.nodes):
        if kind is Kind.LIST:
            objects[oid].children = [ids[i] for i in children]
        elif kind in KEYED_KINDS:
            objects[oid].children = {k: ids[i] for k, i in children}
    bound = {}
    for name, idx in comp.roots:
        state.bindings[name] = ids[idx]
        bound[name] = ids[idx]
    return bound


def encode(state: State, names: Iterable[str], misbehaving: Iterable[str] = ()) -> Component | Unserializable:
    """Extract a storable component, or report why it cannot be stored.

    ``misbehaving`` lists opaque tags or kind names ("map", "float", ...)
    that must not be trusted to round-trip; any match forces the component
    down the recomputation path.
    """
    comp = extract(state, names)
    blocked = set(misbehaving)
    if blocked:
        hit = ({k.value for k in comp.kinds()} | comp.opaque_tags()) & blocked
        if hit:
            return Unserializable("blocklisted: " + ", ".join(sorted(hit)))
    if comp.has_opaque():
        return Unserializable("contains opaque objects: " + ", ".join(sorted(comp.opaque_tags())))
    return comp

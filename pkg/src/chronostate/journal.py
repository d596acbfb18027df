"""Append-only binary journal of checkpoint-graph metadata.

File layout: the magic ``CHRNJ\\x01`` followed by records, each
``u32 length | u32 crc32 | payload``. Payload byte 0 is the record type:

* ``N`` node: u64 t, u64 parent, u8 nondeterministic, u32+utf8 code,
  delta entries, read entries, deleted names, optional snapshot
* ``H`` head move: u64 t

A short or checksum-failing record makes the whole journal unreadable;
nothing is applied from a damaged file.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

from .errors import CorruptJournal

MAGIC = b"CHRNJ\x01"
_HDR = struct.Struct("<II")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


class _Writer:
    def __init__(self) -> None:
        self.buf = bytearray()

    def u8(self, v: int) -> None:
        self.buf.append(v)

    def u16(self, v: int) -> None:
        self.buf += _U16.pack(v)

    def u32(self, v: int) -> None:
        self.buf += _U32.pack(v)

    def u64(self, v: int) -> None:
        self.buf += _U64.pack(v)

    def text(self, s: str) -> None:
        raw = s.encode()
        self.u32(len(raw))
        self.buf += raw

    def names(self, names) -> None:
        names = list(names)
        self.u16(len(names))
        for n in names:
            raw = n.encode()
            self.u16(len(raw))
            self.buf += raw


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptJournal("record field runs past end of record")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode()

    def names(self) -> tuple[str, ...]:
        count = self.u16()
        return tuple(self.take(self.u16()).decode() for _ in range(count))


def encode_node(node) -> bytes:
    w = _Writer()
    w.u8(ord("N"))
    w.u64(node.t)
    w.u64(node.parent if node.parent is not None else 0)
    w.u8(1 if node.nondeterministic else 0)
    w.text(node.code)
    w.u32(len(node.delta))
    for v in node.delta:
        w.names(v.covar)
        if v.blob is None:
            w.u8(0)
        else:
            w.u8(1)
            w.buf += bytes.fromhex(v.blob.digest)
        w.u64(v.size)
    w.u32(len(node.reads))
    for covar, t in node.reads:
        w.names(covar)
        w.u64(t)
    w.names(sorted(node.deleted_names))
    if node.snapshot is None:
        w.u8(0)
    else:
        w.u8(1)
        w.u32(len(node.snapshot))
        for covar, t in sorted(node.snapshot.items()):
            w.names(covar)
            w.u64(t)
    return bytes(w.buf)


def decode_node(payload: bytes) -> dict:
    r = _Reader(payload)
    if r.u8() != ord("N"):
        raise CorruptJournal("not a node record")
    t = r.u64()
    parent = r.u64()
    nondet = bool(r.u8())
    code = r.text()
    delta = []
    for _ in range(r.u32()):
        covar = r.names()
        digest = r.take(16).hex() if r.u8() else None
        delta.append((covar, digest, r.u64()))
    reads = []
    for _ in range(r.u32()):
        covar = r.names()
        reads.append((covar, r.u64()))
    deleted = frozenset(r.names())
    snapshot = None
    if r.u8():
        snapshot = {}
        for _ in range(r.u32()):
            covar = r.names()
            snapshot[covar] = r.u64()
    if r.pos != len(payload):
        raise CorruptJournal("trailing bytes in node record")
    return {
        "t": t,
        "parent": parent,
        "nondeterministic": nondet,
        "code": code,
        "delta": delta,
        "reads": reads,
        "deleted_names": deleted,
        "snapshot": snapshot,
    }


def encode_head(t: int) -> bytes:
    return b"H" + _U64.pack(t)


class Journal:
    def __init__(self, path: str | os.PathLike, fsync: bool = True) -> None:
        self.path = Path(path)
        self.fsync = fsync
        if not self.path.exists():
            with open(self.path, "wb") as f:
                f.write(MAGIC)
                self._flush(f)

    def _flush(self, f) -> None:
        f.flush()
        if self.fsync:
            os.fsync(f.fileno())

    def append(self, payload: bytes) -> None:
        with open(self.path, "ab") as f:
            f.write(_HDR.pack(len(payload), zlib.crc32(payload)))
            f.write(payload)
            self._flush(f)

    def size(self) -> int:
        return self.path.stat().st_size

    def records(self) -> list[bytes]:
        """All record payloads; raises CorruptJournal on any damage."""
        data = self.path.read_bytes()
        if not data.startswith(MAGIC):
            raise CorruptJournal(f"{self.path}: bad magic")
        pos = len(MAGIC)
        out = []
        while pos < len(data):
            if pos + _HDR.size > len(data):
                raise CorruptJournal(f"{self.path}: truncated record header at byte {pos}")
            length, crc = _HDR.unpack_from(data, pos)
            pos += _HDR.size
            payload = data[pos:pos + length]
            if len(payload) != length:
                raise CorruptJournal(f"{self.path}: truncated record at byte {pos}")
            if zlib.crc32(payload) != crc:
                raise CorruptJournal(f"{self.path}: checksum mismatch at byte {pos}")
            out.append(payload)
            pos += length
        return out

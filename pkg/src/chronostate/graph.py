"""The Checkpoint Graph: a rooted tree of per-cell incremental checkpoints.

Each node records the versioned Co-variables its cell wrote, the cell's
code, the versioned Co-variables it accessed, the names it deleted, and
(by default) a snapshot of which versioned Co-variables make up the
session state after it. Timestamp 0 is a synthetic empty root.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from .blobstore import BlobKey, BlobStore, make_key
from .errors import CorruptJournal, StorageError, UnknownTimestamp
from .journal import Journal, decode_node, encode_head, encode_node

log = logging.getLogger(__name__)

ROOT = 0

Covar = tuple[str, ...]


@dataclass(frozen=True)
class VersionedCoVariable:
    covar: Covar
    t: int
    blob: BlobKey | None = field(default=None, compare=False)
    size: int = field(default=0, compare=False)

    @property
    def missing(self) -> bool:
        return self.blob is None

    def __str__(self) -> str:
        return f"({{{','.join(self.covar)}}}, t{self.t})"


@dataclass
class CheckpointNode:
    t: int
    parent: int | None
    code: str
    delta: tuple[VersionedCoVariable, ...]
    reads: tuple[tuple[Covar, int], ...]
    deleted_names: frozenset
    snapshot: dict[Covar, int] | None
    nondeterministic: bool = False
    depth: int = 0
    children: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def entry(self, covar: Covar) -> VersionedCoVariable:
        for v in self.delta:
            if v.covar == covar:
                return v
        raise KeyError(f"t{self.t} did not write {covar}")


@dataclass
class StateDiff:
    current: int
    target: int
    lca: int
    identical: set[Covar]
    diverged: set[Covar]
    to_load: list[VersionedCoVariable]
    to_delete: set[Covar]


def apply_delta(snapshot: dict[Covar, int], delta: Iterable[Covar], t: int, deleted: Iterable[str]) -> dict[Covar, int]:
    """Successor snapshot: entries overlapping the delta or deleted names go."""
    delta = list(delta)
    touched = set(deleted)
    for covar in delta:
        touched.update(covar)
    out = {c: ct for c, ct in snapshot.items() if touched.isdisjoint(c)}
    for covar in delta:
        out[covar] = t
    return out


class CheckpointGraph:
    def __init__(self, store: BlobStore | None = None, journal: Journal | None = None, snapshots: bool = True):
        self.store = store
        self.journal = journal
        self.snapshots = snapshots
        root = CheckpointNode(ROOT, None, "", (), (), frozenset(), {} if snapshots else None)
        self.nodes: dict[int, CheckpointNode] = {ROOT: root}
        self.head = ROOT
        self._next_t = 1

    # lookup -----------------------------------------------------------

    def node(self, t: int) -> CheckpointNode:
        try:
            return self.nodes[t]
        except KeyError:
            raise UnknownTimestamp(t) from None

    def __contains__(self, t: int) -> bool:
        return t in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def path(self, t: int) -> list[int]:
        """Timestamps from the root down to ``t`` inclusive."""
        out = []
        cur: int | None = t
        self.node(t)
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur].parent
        out.reverse()
        return out

    def vcv(self, covar: Covar, t: int) -> VersionedCoVariable:
        return self.node(t).entry(tuple(covar))

    # writing ----------------------------------------------------------

    def commit(
        self,
        updated: Iterable[tuple[Covar, bytes | None]],
        code: str,
        reads: Iterable[tuple[Covar, int]],
        deleted: Iterable[str] = (),
        nondeterministic: bool = False,
    ) -> int:
        """Write a node for one cell under the head and make it the head.

        ``updated`` pairs each written Co-variable with its payload, or
        ``None`` when it could not be serialized. Blob write failures are
        downgraded to missing blobs with a warning.
        """
        parent = self.node(self.head)
        t = self._next_t
        warnings: list[str] = []
        entries = []
        for covar, payload in updated:
            covar = tuple(covar)
            blob = None
            size = 0
            if payload is not None and self.store is not None:
                key = make_key(covar, t, payload)
                try:
                    self.store.put(key, payload)
                    blob, size = key, len(payload)
                except StorageError as exc:
                    msg = f"blob for {{{','.join(covar)}}} not stored: {exc}"
                    log.warning(msg)
                    warnings.append(msg)
            entries.append(VersionedCoVariable(covar, t, blob, size))
        if self.store is not None:
            self.store.sync()
        reads = tuple((tuple(c), rt) for c, rt in reads)
        parent_state = self.session_state(parent.t)
        for c, rt in reads:
            if parent_state.get(c) != rt:
                raise ValueError(f"read ({c}, t{rt}) is not in the state at t{parent.t}")
        deleted = frozenset(deleted)
        snapshot = apply_delta(parent_state, (e.covar for e in entries), t, deleted) if self.snapshots else None
        node = CheckpointNode(
            t, parent.t, code, tuple(entries), reads, deleted, snapshot,
            nondeterministic, parent.depth + 1, warnings=warnings,
        )
        self._add(node)
        if self.journal is not None:
            self.journal.append(encode_node(node))
        self.head = t
        return t

    def _add(self, node: CheckpointNode) -> None:
        self.nodes[node.t] = node
        self.nodes[node.parent].children.append(node.t)
        self._next_t = max(self._next_t, node.t + 1)

    def move_head(self, t: int) -> None:
        self.node(t)
        if t != self.head:
            self.head = t
            if self.journal is not None:
                self.journal.append(encode_head(t))

    # queries ----------------------------------------------------------

    def session_state(self, t: int) -> dict[Covar, int]:
        """Versioned Co-variables making up the state after ``t``."""
        node = self.node(t)
        if node.snapshot is not None:
            return dict(node.snapshot)
        snap: dict[Covar, int] = {}
        for s in self.path(t)[1:]:
            n = self.nodes[s]
            snap = apply_delta(snap, (e.covar for e in n.delta), s, n.deleted_names)
        return snap

    def lca(self, a: int, b: int) -> int:
        na, nb = self.node(a), self.node(b)
        while na.depth > nb.depth:
            na = self.nodes[na.parent]
        while nb.depth > na.depth:
            nb = self.nodes[nb.parent]
        while na.t != nb.t:
            na = self.nodes[na.parent]
            nb = self.nodes[nb.parent]
        return na.t

    def diff(self, current: int, target: int) -> StateDiff:
        c = self.lca(current, target)
        sc = self.session_state(current)
        st = self.session_state(target)
        sl = sc if c == current else st if c == target else self.session_state(c)
        identical = {x for x, t in sc.items() if st.get(x) == t and sl.get(x) == t}
        diverged = (set(sc) | set(st)) - identical
        to_load = sorted(
            (self.vcv(x, t) for x, t in st.items() if x not in identical),
            key=lambda v: (v.t, v.covar),
        )
        to_delete = {x for x in sc if x not in identical and x not in st}
        return StateDiff(current, target, c, identical, diverged, to_load, to_delete)

    def verify(self) -> None:
        """Check tree shape and the snapshot recurrence on every node."""
        for t, n in self.nodes.items():
            if t == ROOT:
                continue
            p = self.node(n.parent)
            assert n.depth == p.depth + 1, t
            assert t in p.children, t
            assert t > n.parent, t
            if n.snapshot is not None:
                expect = apply_delta(self.session_state(n.parent), (e.covar for e in n.delta), t, n.deleted_names)
                assert n.snapshot == expect, t
            parent_state = self.session_state(n.parent)
            for c, rt in n.reads:
                assert parent_state.get(c) == rt, (t, c, rt)

    # persistence ------------------------------------------------------

    @classmethod
    def load(cls, journal: Journal, store: BlobStore | None = None, snapshots: bool = True) -> CheckpointGraph:
        """Rebuild a graph by replaying its journal."""
        records = journal.records()
        g = cls(store, None, snapshots)
        try:
            for payload in records:
                kind = payload[:1]
                if kind == b"N":
                    rec = decode_node(payload)
                    t = rec["t"]
                    if rec["parent"] not in g.nodes or t in g.nodes:
                        raise CorruptJournal(f"node t{t} has unknown parent or is duplicated")
                    entries = tuple(
                        VersionedCoVariable(covar, t, BlobKey(covar, t, digest) if digest else None, size)
                        for covar, digest, size in rec["delta"]
                    )
                    parent = g.nodes[rec["parent"]]
                    snapshot = None
                    if snapshots:
                        snapshot = rec["snapshot"]
                        if snapshot is None:
                            snapshot = apply_delta(parent.snapshot, (e.covar for e in entries), t, rec["deleted_names"])
                    node = CheckpointNode(
                        t, rec["parent"], rec["code"], entries, tuple(rec["reads"]),
                        rec["deleted_names"], snapshot, rec["nondeterministic"], parent.depth + 1,
                    )
                    g._add(node)
                    g.head = t
                elif kind == b"H":
                    if len(payload) != 9:
                        raise CorruptJournal("bad head record")
                    t = int.from_bytes(payload[1:], "little")
                    if t not in g.nodes:
                        raise CorruptJournal(f"head record names unknown node t{t}")
                    g.head = t
                else:
                    raise CorruptJournal(f"unknown record type {kind!r}")
        except (UnicodeDecodeError, IndexError) as exc:
            raise CorruptJournal(str(exc)) from None
        g.journal = journal
        return g

    # presentation -----------------------------------------------------

    def label(self, t: int) -> str:
        return "ROOT" if t == ROOT else f"t{t}"

    def export_dot(self) -> str:
        lines = ["digraph checkpoints {", "  rankdir=TB;", '  node [shape=box, fontname="monospace"];']
        for t in sorted(self.nodes):
            n = self.nodes[t]
            parts = [self.label(t)]
            if n.delta:
                parts.append(" ".join("{" + ",".join(v.covar) + "}" + ("*" if v.missing else "") for v in n.delta))
            if n.deleted_names:
                parts.append("del " + ",".join(sorted(n.deleted_names)))
            label = "\\n".join(p.replace('"', '\\"') for p in parts)
            style = ', style=filled, fillcolor="lightblue", penwidth=2' if t == self.head else ""
            lines.append(f'  n{t} [label="{label}"{style}];')
        for t in sorted(self.nodes):
            n = self.nodes[t]
            if n.parent is not None:
                lines.append(f"  n{n.parent} -> n{t};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def log_lines(self) -> list[str]:
        """Tree listing; branches are drawn with |- and `- and the head is marked '*'."""
        out: list[str] = []
        stack = [(ROOT, "", "")]
        while stack:
            cur, lead, rest = stack.pop()
            n = self.nodes[cur]
            mark = "*" if cur == self.head else " "
            code = n.code.strip().splitlines()[0] if n.code.strip() else ""
            if len(code) > 50:
                code = code[:47] + "..."
            delta = " ".join("{" + ",".join(v.covar) + "}" for v in n.delta)
            extra = f"  [{delta}]" if delta else ""
            out.append(f"{mark} {lead}{self.label(cur)}{extra}  {code}".rstrip())
            kids = n.children
            if len(kids) == 1:
                stack.append((kids[0], rest, rest))
            else:
                for i, k in reversed(list(enumerate(kids))):
                    last = i == len(kids) - 1
                    stack.append((k, rest + ("`- " if last else "|- "), rest + ("   " if last else "|  ")))
        return out

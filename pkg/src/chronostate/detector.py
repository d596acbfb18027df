"""Co-variable partitioning and per-cell state delta detection.

A VarGraph fingerprints everything reachable from one name: object ids,
kinds, primitive values and child edges. Names whose VarGraphs share an
object belong to the same Co-variable. After a cell runs, only
Co-variables with a member the cell touched can have changed, so only
their members are re-fingerprinted and compared.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .cellscript.interpreter import AccessLog
from .errors import NotFlat, UnboundVariable
from .heap import PRIMITIVE_KINDS, Kind, State


@dataclass(frozen=True, eq=False)
class VarGraph:
    """Reachability fingerprint of one variable.

    ``nodes`` lists ``(id, kind, value, edges)`` in depth-first preorder,
    where ``edges`` is a tuple of child ids (lists) or of ``(key, id)``
    pairs in key order (maps, records). Opaque objects are leaves whose
    value is ``"opaque:<tag>"``.
    """

    root_name: str
    nodes: tuple
    ids: frozenset
    has_opaque: bool

    def __eq__(self, other) -> bool:
        if not isinstance(other, VarGraph):
            return NotImplemented
        return self.root_name == other.root_name and self.nodes == other.nodes

    def __hash__(self) -> int:
        return hash((self.root_name, self.nodes))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def is_flat_list(self) -> bool:
        if not self.nodes or self.nodes[0][1] is not Kind.LIST:
            return False
        return all(n[1] in PRIMITIVE_KINDS for n in self.nodes[1:])


def build_vargraph(state: State, name: str) -> VarGraph:
    try:
        root = state.bindings[name]
    except KeyError:
        raise UnboundVariable(name) from None
    objects = state.objects
    seen: set[int] = set()
    nodes = []
    has_opaque = False
    stack = [root]
    while stack:
        oid = stack.pop()
        if oid in seen:
            continue
        seen.add(oid)
        o = objects[oid]
        kind = o.kind
        ch = o.children
        if ch is None:
            if kind is Kind.OPAQUE:
                has_opaque = True
                nodes.append((oid, kind, "opaque:" + o.value, None))
            else:
                nodes.append((oid, kind, o.value, None))
        elif kind is Kind.LIST:
            edges = tuple(ch)
            nodes.append((oid, kind, None, edges))
            stack.extend(reversed(edges))
        else:
            edges = tuple(sorted(ch.items()))
            nodes.append((oid, kind, None, edges))
            stack.extend(c for _, c in reversed(edges))
    return VarGraph(name, tuple(nodes), frozenset(seen), has_opaque)


def hash_fastpath(graph: VarGraph) -> int:
    """Order-sensitive 64-bit digest of a flat list of primitives.

    Covers the list's own identity and element kinds and values, not
    element identities: replacing an element by an equal fresh object is
    invisible to the digest (as is a hash collision).
    """
    if not graph.is_flat_list:
        raise NotFlat(f"{graph.root_name!r} is not a flat list of primitives")
    h = hashlib.blake2b(digest_size=8)
    h.update(graph.nodes[0][0].to_bytes(8, "little"))
    values = {n[0]: n for n in graph.nodes[1:]}
    for cid in graph.nodes[0][3]:
        _, kind, value, _ = values[cid]
        h.update(repr((kind.value, value)).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class CoVariable:
    """A maximal set of names whose reachable objects are connected.

    Identity (equality, hashing) is the sorted member tuple.
    """

    members: tuple[str, ...]
    component: frozenset = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        if not self.members:
            raise ValueError("a Co-variable needs at least one member")

    def overlaps(self, names: Iterable[str]) -> bool:
        return not set(self.members).isdisjoint(names)


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list[str]]:
        out: dict[str, list[str]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return list(out.values())


def partition_graphs(graphs: Mapping[str, VarGraph], names: Iterable[str] | None = None) -> list[CoVariable]:
    """Group ``names`` (default: all) into Co-variables by shared object ids."""
    names = list(graphs) if names is None else list(names)
    uf = _UnionFind(names)
    owner: dict[int, str] = {}
    for n in names:
        for oid in graphs[n].ids:
            other = owner.setdefault(oid, n)
            if other != n:
                uf.union(other, n)
    result = []
    for group in uf.groups():
        members = tuple(sorted(group))
        comp = frozenset().union(*(graphs[n].ids for n in members))
        result.append(CoVariable(members, comp))
    result.sort(key=lambda c: c.members)
    return result


def partition(state: State) -> list[CoVariable]:
    graphs = {n: build_vargraph(state, n) for n in state.bindings}
    return partition_graphs(graphs)


def candidates(prev_partition: Iterable[CoVariable], log: AccessLog) -> list[CoVariable]:
    """Co-variables that may have changed: those with an accessed member."""
    accessed = log.accessed
    if not accessed:
        return []
    return [c for c in prev_partition if not accessed.isdisjoint(c.members)]


@dataclass
class StateDelta:
    updated: list[tuple[CoVariable, bool]] = field(default_factory=list)  # (covar, serializable)
    deleted_names: set[str] = field(default_factory=set)
    accessed_covariables: list[tuple[str, ...]] = field(default_factory=list)

    @property
    def updated_covars(self) -> list[tuple[str, ...]]:
        return [c.members for c, _ in self.updated]


def detect_delta(
    pre_graphs: Mapping[str, VarGraph],
    pre_partition: list[CoVariable],
    state: State,
    log: AccessLog,
    *,
    check_all: bool = False,
    fastpath: bool = False,
    counters: Counter | None = None,
) -> tuple[StateDelta, dict[str, VarGraph], list[CoVariable]]:
    """Compute the delta of one cell execution.

    Returns the delta plus the refreshed VarGraph cache and partition.
    """
    counters = counters if counters is not None else Counter()
    bound = state.bindings
    if check_all:
        cands = list(pre_partition)
        new_names = [n for n in bound if n not in pre_graphs]
    else:
        cands = candidates(pre_partition, log)
        new_names = [n for n in log.written_names if n in bound and n not in pre_graphs]
    counters["candidates_checked"] += len(cands)

    graphs = dict(pre_graphs)
    check: list[str] = []
    deleted: set[str] = set()
    for c in cands:
        for n in c.members:
            if n in bound:
                graphs[n] = build_vargraph(state, n)
                counters["vargraph_rebuilds"] += 1
                check.append(n)
            else:
                del graphs[n]
                deleted.add(n)
    for n in new_names:
        graphs[n] = build_vargraph(state, n)
        counters["vargraph_builds_new"] += 1
        check.append(n)

    cand_by_members = {c.members: c for c in cands}
    post = partition_graphs(graphs, check)
    updated: list[tuple[CoVariable, bool]] = []
    for cov in post:
        has_opaque = any(graphs[n].has_opaque for n in cov.members)
        if cov.members not in cand_by_members:
            changed = True  # created, by assignment, split, or merge
        elif has_opaque:
            changed = True  # opaque objects cannot be traversed: updated on access
        else:
            changed = False
            for n in cov.members:
                old, new = pre_graphs[n], graphs[n]
                if fastpath and old.is_flat_list and new.is_flat_list:
                    counters["fastpath_hits"] += 1
                    if hash_fastpath(old) != hash_fastpath(new):
                        changed = True
                        break
                elif old != new:
                    changed = True
                    break
        if changed:
            updated.append((cov, not has_opaque))

    kept = [c for c in pre_partition if c.members not in cand_by_members]
    new_partition = sorted(kept + post, key=lambda c: c.members)
    counters["covariables_total"] = len(new_partition)
    counters["cells"] += 1
    delta = StateDelta(updated, deleted, [c.members for c in cands])
    return delta, graphs, new_partition


class Detector:
    """Holds the VarGraph cache and current partition between cells."""

    def __init__(self, check_all: bool = False, fastpath: bool = False):
        self.check_all = check_all
        self.fastpath = fastpath
        self.graphs: dict[str, VarGraph] = {}
        self.partition: list[CoVariable] = []
        self.counters: Counter = Counter()

    def reset(self, state: State) -> None:
        self.graphs = {n: build_vargraph(state, n) for n in state.bindings}
        self.partition = partition_graphs(self.graphs)

    def refresh(self, state: State, names: Iterable[str]) -> None:
        """Re-fingerprint ``names`` after an external change (a checkout)."""
        for n in names:
            if n in state.bindings:
                self.graphs[n] = build_vargraph(state, n)
                self.counters["vargraph_refreshes"] += 1
            else:
                self.graphs.pop(n, None)
        self.partition = partition_graphs(self.graphs)

    def detect(self, state: State, log: AccessLog) -> StateDelta:
        delta, self.graphs, self.partition = detect_delta(
            self.graphs,
            self.partition,
            state,
            log,
            check_all=self.check_all,
            fastpath=self.fastpath,
            counters=self.counters,
        )
        return delta

    def covariable_of(self, name: str) -> CoVariable:
        for c in self.partition:
            if name in c.members:
                return c
        raise UnboundVariable(name)

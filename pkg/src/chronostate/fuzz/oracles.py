"""Brute-force reference implementations used to check the engine.

None of these share code with the paths they check: closures are plain
breadth-first walks over the raw object table, Co-variables come from
pairwise set intersection, and states are rebuilt by re-running every
cell from an empty namespace.
"""

from __future__ import annotations

import random
from collections import deque
from itertools import combinations

from ..cellscript import execute, parse
from ..graph import ROOT, CheckpointGraph
from ..heap import Kind, State


def naive_closure(state: State, name: str) -> set[int]:
    objects = state.objects
    start = state.bindings[name]
    seen = {start}
    queue = deque([start])
    while queue:
        o = objects[queue.popleft()]
        kids = []
        if o.kind is Kind.LIST:
            kids = list(o.children)
        elif o.kind in (Kind.MAP, Kind.RECORD):
            kids = list(o.children.values())
        for k in kids:
            if k not in seen:
                seen.add(k)
                queue.append(k)
    return seen


def naive_components(state: State) -> dict[tuple[str, ...], set[int]]:
    """Co-variables as connected components of the name-overlap graph."""
    names = sorted(state.bindings)
    reach = {n: naive_closure(state, n) for n in names}
    adj: dict[str, set[str]] = {n: set() for n in names}
    for a, b in combinations(names, 2):
        if reach[a] & reach[b]:
            adj[a].add(b)
            adj[b].add(a)
    out = {}
    done: set[str] = set()
    for n in names:
        if n in done:
            continue
        group = {n}
        frontier = [n]
        while frontier:
            x = frontier.pop()
            for y in adj[x]:
                if y not in group:
                    group.add(y)
                    frontier.append(y)
        done |= group
        members = tuple(sorted(group))
        out[members] = set().union(*(reach[m] for m in members))
    return out


def _object_record(state: State, oid: int):
    o = state.objects[oid]
    ch = o.children
    if ch is not None:
        ch = tuple(ch) if o.kind is Kind.LIST else tuple(sorted(ch.items()))
    return (o.kind, type(o.value), o.value, ch, o.deterministic)


def component_unchanged(pre: State, pre_ids: set[int], post: State, post_ids: set[int]) -> bool:
    """Same objects, and each object's kind, payload and edges unchanged."""
    if pre_ids != post_ids:
        return False
    for oid in pre_ids:
        if oid not in pre.objects or oid not in post.objects:
            return False
        a, b = _object_record(pre, oid), _object_record(post, oid)
        if a != b:
            # NaN payloads compare unequal to themselves
            if not (a[0] is Kind.FLOAT and a[2] != a[2] and b[2] != b[2] and a[3:] == b[3:]):
                return False
    return True


def changed_covariables(pre: State, post: State) -> tuple[set[tuple[str, ...]], set[tuple[str, ...]]]:
    """Ground truth for one cell.

    Returns (post Co-variables that are new or modified, pre Co-variables
    that no longer exist unchanged).
    """
    before = naive_components(pre)
    after = naive_components(post)
    changed = set()
    for members, ids in after.items():
        if members not in before or not component_unchanged(pre, before[members], post, ids):
            changed.add(members)
    gone = set()
    for members, ids in before.items():
        if members not in after or not component_unchanged(pre, ids, post, after[members]):
            gone.add(members)
    return changed, gone


def cell_rng(seed: int, t: int) -> random.Random:
    return random.Random(f"{seed}:{t}")


def replay_from_scratch(graph: CheckpointGraph, t: int, seed: int = 0) -> State:
    """Re-run every cell on the root-to-``t`` path in a fresh state."""
    state = State()
    cur = t
    path = []
    while cur != ROOT:
        path.append(cur)
        cur = graph.nodes[cur].parent
    for s in reversed(path):
        execute(parse(graph.nodes[s].code), state, cell_rng(seed, s))
        state.collect()
    return state


def naive_ancestors(graph: CheckpointGraph, t: int) -> list[int]:
    out = [t]
    while graph.nodes[out[-1]].parent is not None:
        out.append(graph.nodes[out[-1]].parent)
    return out


def naive_lca(graph: CheckpointGraph, a: int, b: int) -> int:
    common = set(naive_ancestors(graph, a)) & set(naive_ancestors(graph, b))
    return max(common, key=lambda t: len(naive_ancestors(graph, t)))


def naive_session_state(graph: CheckpointGraph, t: int) -> dict[tuple[str, ...], int]:
    """Session state straight from its definition over the ancestor chain.

    ``(X, ti)`` is in the state of ``t`` if ``ti`` is an ancestor of ``t``
    and no node strictly below ``ti`` on the path to ``t`` wrote an
    overlapping Co-variable or deleted one of its names.
    """
    chain = list(reversed(naive_ancestors(graph, t)))
    result = {}
    for i, ti in enumerate(chain):
        for v in graph.nodes[ti].delta:
            members = set(v.covar)
            shadowed = False
            for tj in chain[i + 1:]:
                later = graph.nodes[tj]
                if any(members & set(w.covar) for w in later.delta) or members & later.deleted_names:
                    shadowed = True
                    break
            if not shadowed:
                result[v.covar] = ti
    return result


def min_replays_exhaustive(graph: CheckpointGraph, wanted, loadable) -> int | None:
    """Fewest replayed cells that make every ``wanted`` entry available.

    Tries replay sets in order of size. ``loadable(v)`` says whether a
    versioned Co-variable's blob can be read. Returns None if impossible.
    """
    from itertools import combinations as combos

    nodes = sorted(t for t in graph.nodes if t != ROOT and not graph.nodes[t].nondeterministic)

    def available(v, chosen, memo) -> bool:
        if v in memo:
            return memo[v]
        memo[v] = False
        ok = loadable(v)
        if not ok and v.t in chosen:
            node = graph.nodes[v.t]
            ok = all(available(graph.nodes[rt].entry(c), chosen, memo) for c, rt in node.reads)
        memo[v] = ok
        return ok

    wanted = list(wanted)
    for k in range(len(nodes) + 1):
        for chosen in combos(nodes, k):
            chosen = set(chosen)
            memo: dict = {}
            if all(available(v, chosen, memo) for v in wanted):
                return k
    return None

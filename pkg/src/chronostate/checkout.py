"""Incremental checkout with recursive fallback recomputation.

Only Co-variables that diverged between the head and the target are
touched. Each needed versioned Co-variable is loaded from its blob; if the
blob is missing or corrupt, the cell that wrote it is replayed in a
sandbox on its own recorded inputs, which are restored the same way.
Everything is staged before the live state is modified, so a failed
checkout changes nothing.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Iterable

from .blobstore import BlobStore, make_key
from .cellscript import parse, replay_in_sandbox
from .component import Component, materialize
from .detector import Detector
from .errors import ChronoError, CorruptBlob, RestoreFailed, UnknownKey
from .graph import ROOT, CheckpointGraph, StateDiff, VersionedCoVariable
from .heap import State

log = logging.getLogger(__name__)


@dataclass
class CheckoutPlan:
    current: int
    target: int
    diff: StateDiff | None
    loads: list[VersionedCoVariable]
    deletes: set[tuple[str, ...]]
    replays: list[int]
    fallbacks: dict[VersionedCoVariable, list[int]] = field(default_factory=dict)

    @property
    def needed(self) -> list[VersionedCoVariable]:
        return self.diff.to_load if self.diff is not None else []


@dataclass
class CheckoutReport:
    target: int
    previous: int
    lca: int = ROOT
    loaded_bytes: int = 0
    blobs_loaded: int = 0
    cells_replayed: int = 0
    covariables_loaded: int = 0
    covariables_deleted: int = 0
    identical: int = 0
    duration_ms: float = 0.0
    noop: bool = False

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "previous": self.previous,
            "lca": self.lca,
            "loaded_bytes": self.loaded_bytes,
            "blobs_loaded": self.blobs_loaded,
            "cells_replayed": self.cells_replayed,
            "covariables_loaded": self.covariables_loaded,
            "covariables_deleted": self.covariables_deleted,
            "identical": self.identical,
            "duration_ms": round(self.duration_ms, 3),
        }


class CheckoutEngine:
    def __init__(self, graph: CheckpointGraph, store: BlobStore, self_heal: bool = False):
        self.graph = graph
        self.store = store
        self.self_heal = self_heal

    # planning ---------------------------------------------------------

    def _loadable(self, v: VersionedCoVariable, cache: dict) -> bool:
        ok = cache.get(v)
        if ok is None:
            ok = cache[v] = v.blob is not None and self.store.check(v.blob)
        return ok

    def _resolve(self, wanted: Iterable[VersionedCoVariable]):
        """Choose blob loads and cell replays that produce ``wanted``.

        A versioned Co-variable comes either from its blob or from replaying
        the node that wrote it, so every replay chosen here is forced by an
        unloadable blob; the replay count is therefore minimal. When a node
        is replayed anyway, its other outputs are taken from the replay
        rather than loaded (fewer bytes).
        """
        graph = self.graph
        cache: dict = {}
        loads: set[VersionedCoVariable] = set()
        replays: set[int] = set()
        fallbacks: dict[VersionedCoVariable, list[int]] = {}
        for top in wanted:
            chain: list[int] = []
            stack = [top]
            while stack:
                v = stack.pop()
                if v.t in replays:
                    continue
                if self._loadable(v, cache):
                    loads.add(v)
                    continue
                node = graph.node(v.t)
                why = "has no stored blob" if v.blob is None else "failed to load"
                if node.nondeterministic:
                    raise RestoreFailed(
                        f"{v} {why} and was written by a nondeterministic cell (t{v.t}); "
                        "it cannot be recomputed exactly"
                    )
                replays.add(v.t)
                chain.append(v.t)
                for covar, rt in node.reads:
                    try:
                        stack.append(graph.vcv(covar, rt))
                    except (KeyError, ChronoError) as exc:
                        raise RestoreFailed(f"input ({covar}, t{rt}) of t{v.t} is not recorded: {exc}") from None
            if chain:
                fallbacks[top] = sorted(chain)
        load_list = sorted((v for v in loads if v.t not in replays), key=lambda v: (v.t, v.covar))
        return load_list, sorted(replays), fallbacks

    def plan(self, current: int, target: int) -> CheckoutPlan:
        d = self.graph.diff(current, target)
        loads, replays, fallbacks = self._resolve(d.to_load)
        return CheckoutPlan(current, target, d, loads, set(d.to_delete), replays, fallbacks)

    # staging ----------------------------------------------------------

    def _stage(self, loads, replays, stats: dict) -> dict[VersionedCoVariable, Component]:
        graph = self.graph
        memo: dict[VersionedCoVariable, Component] = {}
        for v in loads:
            try:
                data = self.store.get(v.blob)
                memo[v] = Component.from_bytes(data)
            except (CorruptBlob, UnknownKey) as exc:
                raise RestoreFailed(f"{v} became unreadable during checkout: {exc}") from exc
            stats["loaded_bytes"] += len(data)
            stats["blobs_loaded"] += 1
        for t in replays:
            node = graph.node(t)
            try:
                inputs = [memo[graph.vcv(c, rt)] for c, rt in node.reads]
            except KeyError as exc:
                raise RestoreFailed(f"replay of t{t} is missing input {exc}") from None
            try:
                program = parse(node.code, t)
                outputs, rlog = replay_in_sandbox(
                    program, inputs, [e.covar for e in node.delta], rng=random.Random(0)
                )
            except ChronoError as exc:
                raise RestoreFailed(f"replay of t{t} failed: {exc}") from exc
            if rlog.nondeterministic:
                raise RestoreFailed(f"replay of t{t} executed nondeterministic code")
            stats["cells_replayed"] += 1
            for e in node.delta:
                memo[e] = outputs[e.covar]
                if self.self_heal and e.blob is not None and not outputs[e.covar].has_opaque():
                    self._heal(e, outputs[e.covar])
        return memo

    def _heal(self, v: VersionedCoVariable, comp: Component) -> None:
        payload = comp.to_bytes()
        if make_key(v.covar, v.t, payload) != v.blob or self.store.check(v.blob):
            return
        try:
            self.store.put(v.blob, payload)
            log.info("rewrote blob %s from recomputation", v)
        except ChronoError as exc:
            log.warning("could not rewrite blob %s: %s", v, exc)

    def restore_covariable(self, vcv: VersionedCoVariable) -> Component:
        """Restore one versioned Co-variable by loading or recomputing it."""
        loads, replays, _ = self._resolve([vcv])
        stats = {"loaded_bytes": 0, "blobs_loaded": 0, "cells_replayed": 0}
        return self._stage(loads, replays, stats)[vcv]

    # applying ---------------------------------------------------------

    def checkout(
        self,
        state: State,
        detector: Detector,
        target: int,
        current: int | None = None,
        move_head: bool = True,
    ) -> CheckoutReport:
        """Bring ``state`` from ``current`` (default: the head) to ``target``."""
        start = time.perf_counter()
        graph = self.graph
        current = graph.head if current is None else current
        graph.node(target)
        report = CheckoutReport(target=target, previous=current)
        plan = self.plan(current, target)
        d = plan.diff
        report.lca = d.lca
        report.identical = len(d.identical)
        if not d.to_load and not d.to_delete:
            report.noop = True
            if move_head:
                graph.move_head(target)
            report.duration_ms = (time.perf_counter() - start) * 1000
            return report

        stats = {"loaded_bytes": 0, "blobs_loaded": 0, "cells_replayed": 0}
        memo = self._stage(plan.loads, plan.replays, stats)
        staged = [memo[v] for v in d.to_load]

        # swap: nothing below can fail on well-formed input
        current_state = graph.session_state(current)
        unbind: set[str] = set()
        for covar in current_state:
            if covar not in d.identical:
                unbind.update(covar)
        for n in unbind:
            state.bindings.pop(n, None)
        touched = set(unbind)
        for comp in staged:
            touched.update(materialize(state, comp))
        state.collect()
        detector.refresh(state, touched)
        if move_head:
            graph.move_head(target)

        expected = set(graph.session_state(target))
        actual = {c.members for c in detector.partition}
        if expected != actual:
            raise RuntimeError(
                f"checkout to t{target} produced Co-variables {sorted(actual)}, expected {sorted(expected)}"
            )
        report.loaded_bytes = stats["loaded_bytes"]
        report.blobs_loaded = stats["blobs_loaded"]
        report.cells_replayed = stats["cells_replayed"]
        report.covariables_loaded = len(staged)
        report.covariables_deleted = len(d.to_delete)
        report.duration_ms = (time.perf_counter() - start) * 1000
        return report

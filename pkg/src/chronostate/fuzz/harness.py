"""Oracle-equivalence fuzzing of the whole engine.

A trace is a list of steps (run a cell, check out a node, poison a blob)
executed against an in-memory session. Every cell is checked against the
brute-force oracles; every checkout is compared with a from-scratch
replay. Failing traces are shrunk greedily before being reported.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from ..errors import RestoreFailed
from ..graph import ROOT
from ..heap import deep_equal
from ..session import Config, Session
from .generator import CellGenerator
from .oracles import (
    changed_covariables,
    naive_components,
    naive_lca,
    naive_session_state,
    replay_from_scratch,
)


@dataclass
class Step:
    op: str  # "cell" | "checkout" | "poison"
    source: str = ""
    ref: int = -1  # index of the cell step naming the node; -1 is ROOT
    covar: tuple[str, ...] = ()


@dataclass
class Violation:
    kind: str
    detail: str
    seed: int | None = None
    script: list[Step] = field(default_factory=list)

    def __str__(self) -> str:
        where = f" (seed {self.seed})" if self.seed is not None else ""
        return f"{self.kind}{where}: {self.detail}"


@dataclass
class FuzzOptions:
    n_cells: int = 30
    max_names: int = 40
    checkout_rate: float = 0.2
    poison_rate: float = 0.0
    allow_nondet: bool = False
    allow_opaque: bool = True
    error_rate: float = 0.03
    check_cells: bool = True
    check_checkouts: bool = True
    check_graph: bool = True
    reset_every: int = 0  # detection fuzz: start a fresh session every n cells
    diff_pairs: int = 3  # extra random node pairs whose diff is checked at the end


@dataclass
class FuzzReport:
    counters: Counter = field(default_factory=Counter)
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: FuzzReport) -> None:
        self.counters.update(other.counters)
        self.violations.extend(other.violations)

    def false_positive_rate(self) -> float:
        d = self.counters["detected_updates"]
        return self.counters["false_positives"] / d if d else 0.0

    def false_diverged_rate(self) -> float:
        d = self.counters["diverged_checked"]
        return self.counters["false_diverged"] / d if d else 0.0


def check_cell(session: Session, source: str, counters: Counter) -> list[tuple[str, str]]:
    """Run one cell and compare detection with the brute-force oracles."""
    pre = session.state.copy()
    pre_components = naive_components(pre)
    result = session.run(source)
    post = session.state
    problems: list[tuple[str, str]] = []
    counters["cells"] += 1
    if result.error is not None:
        counters["cells_with_errors"] += 1

    changed, gone = changed_covariables(pre, post)
    detected = set(result.delta.updated_covars)
    deleted = result.delta.deleted_names
    counters["detected_updates"] += len(detected)
    counters["true_updates"] += len(changed)
    counters["false_positives"] += len(detected - changed)

    # no false negatives
    for m in sorted(changed - detected):
        problems.append(("false-negative", f"{{{','.join(m)}}} changed but was not detected"))
    for m in sorted(gone):
        for n in m:
            if n not in deleted and not any(n in d for d in detected):
                problems.append(("false-negative", f"{{{','.join(m)}}} changed but {n} is not covered by the delta"))
    # pruning soundness: whatever changed was a candidate
    cands = set(result.delta.accessed_covariables)
    accessed = result.log.accessed
    oracle_cands = {m for m in pre_components if accessed & set(m)}
    if cands != oracle_cands:
        problems.append(("access-completeness", f"candidate set {sorted(cands)} != oracle {sorted(oracle_cands)}"))
    for m in sorted(gone - cands):
        problems.append(("pruning-unsound", f"{{{','.join(m)}}} changed without being a candidate"))
    # partition correctness
    truth = set(naive_components(post))
    mine = {c.members for c in session.detector.partition}
    if truth != mine:
        problems.append(("partition", f"{sorted(mine)} != brute force {sorted(truth)}"))
    snap = set(session.graph.session_state(session.graph.head))
    if snap != truth:
        problems.append(("partition", f"session-state members {sorted(snap)} != brute force {sorted(truth)}"))
    # work bound
    rebuilds = session.detector.counters["vargraph_rebuilds"] - counters["_rebuilds_seen"]
    counters["_rebuilds_seen"] = session.detector.counters["vargraph_rebuilds"]
    bound = sum(len(m) for m in cands)
    if not session.config.check_all and rebuilds > bound:
        problems.append(("work-bound", f"{rebuilds} VarGraph rebuilds exceed bound {bound}"))
    return problems


class TraceRunner:
    """Executes steps one at a time and checks each against the oracles."""

    def __init__(self, options: FuzzOptions, seed: int = 0):
        self.opts = options
        self.seed = seed
        self.session = Session(config=Config(seed=seed))
        self.steps: list[Step] = []
        self.step_t: dict[int, int] = {-1: ROOT}
        self.counters: Counter = Counter()
        self.problems: list[tuple[str, str]] = []
        self._replays: dict[int, object] = {}
        self.rng_check = random.Random(f"idempotence:{seed}")

    def _fail(self, kind: str, detail: str) -> None:
        self.problems.append((kind, detail))

    def replayed(self, t: int):
        st = self._replays.get(t)
        if st is None:
            st = self._replays[t] = replay_from_scratch(self.session.graph, t, self.seed)
        return st

    def reset(self) -> None:
        self.session = Session(config=Config(seed=self.seed))
        self._replays.clear()
        self.counters["_rebuilds_seen"] = 0
        self.step_t = {-1: ROOT}

    # steps ------------------------------------------------------------

    def cell(self, source: str) -> None:
        idx = len(self.steps)
        self.steps.append(Step("cell", source))
        if self.opts.check_cells:
            for kind, detail in check_cell(self.session, source, self.counters):
                self._fail(kind, detail)
        else:
            self.session.run(source)
            self.counters["cells"] += 1
        self.step_t[idx] = self.session.head

    def poison(self, ref: int, covar: tuple[str, ...]) -> None:
        self.steps.append(Step("poison", ref=ref, covar=covar))
        t = self.step_t.get(ref)
        if t is None or t == ROOT:
            return
        try:
            v = self.session.graph.vcv(covar, t)
        except KeyError:
            return
        if v.blob is not None and self.session.store.check(v.blob):
            self.session.store.poison(v.blob)
            self.counters["poisoned"] += 1

    def checkout(self, ref: int) -> None:
        self.steps.append(Step("checkout", ref=ref))
        target = self.step_t.get(ref)
        if target is None:
            return
        s = self.session
        before_head = s.head
        before = s.state.copy()
        d = s.graph.diff(before_head, target)
        ids_before = {n: s.state.bindings.get(n) for x in d.identical for n in x}
        self.counters["checkouts"] += 1
        try:
            report = s.checkout(target)
        except Exception as exc:  # noqa: BLE001 - anything but RestoreFailed is a bug
            if not isinstance(exc, RestoreFailed):
                self._fail("crash", f"checkout to t{target} raised {exc!r}")
                return
            self.counters["restore_failed"] += 1
            if not deep_equal(s.state, before) or s.state.bindings != before.bindings or s.head != before_head:
                self._fail("atomicity", f"failed checkout to t{target} modified the live state")
            if not self.opts.allow_nondet:
                self._fail("unexpected-restore-failure", f"checkout to t{target}: {exc}")
            return
        self.counters["cells_replayed"] += report.cells_replayed
        self.counters["blobs_loaded"] += report.blobs_loaded
        if not self.opts.check_checkouts:
            return
        if not deep_equal(s.state, self.replayed(target)):
            self._fail("inexact-checkout", f"t{before_head} -> t{target} differs from from-scratch replay")
        for n, oid in ids_before.items():
            if s.state.bindings.get(n) != oid:
                self._fail("intrusive-checkout", f"identical name {n} was rebound by checkout to t{target}")
        self.check_diff(before_head, target)
        if self.rng_check.random() < 0.2:
            again = s.checkout(target)
            if again.loaded_bytes or again.cells_replayed:
                self._fail("idempotence", f"second checkout to t{target} did work: {again}")

    def check_diff(self, a: int, b: int) -> None:
        g = self.session.graph
        d = g.diff(a, b)
        sa, sb = self.replayed(a), self.replayed(b)
        self.counters["diffs_checked"] += 1
        for x in d.identical:
            if not deep_equal(sa, sb, x):
                self._fail("diff-unsound", f"{{{','.join(x)}}} marked identical between t{a} and t{b} but differs")
        comps_a, comps_b = naive_components(sa), naive_components(sb)
        for x in d.diverged:
            self.counters["diverged_checked"] += 1
            if x in comps_a and x in comps_b and deep_equal(sa, sb, x):
                self.counters["false_diverged"] += 1
        if naive_lca(g, a, b) != d.lca:
            self._fail("lca", f"lca(t{a}, t{b}) = t{d.lca}, oracle says t{naive_lca(g, a, b)}")

    def finish(self) -> None:
        if self.opts.check_checkouts and self.opts.diff_pairs:
            ts = sorted(self.session.graph.nodes)
            rng = random.Random(self.seed)
            for _ in range(self.opts.diff_pairs):
                self.check_diff(rng.choice(ts), rng.choice(ts))
        if not self.opts.check_graph:
            return
        g = self.session.graph
        try:
            g.verify()
        except AssertionError as exc:
            self._fail("graph-invariant", f"verify failed at {exc}")
        for t in g.nodes:
            if g.session_state(t) != naive_session_state(g, t):
                self._fail("session-state", f"state of t{t} disagrees with its definition")

    def run_script(self, steps: list[Step]) -> None:
        for st in steps:
            if st.op == "cell":
                try:
                    self.cell(st.source)
                except Exception as exc:  # noqa: BLE001
                    self._fail("crash", f"cell raised {exc!r}")
            elif st.op == "checkout":
                self.checkout(st.ref)
            elif st.op == "poison":
                self.poison(st.ref, st.covar)
        self.finish()


def generate_trace(seed: int, options: FuzzOptions) -> TraceRunner:
    rng = random.Random(seed)
    gen = CellGenerator(
        rng,
        max_names=options.max_names,
        allow_opaque=options.allow_opaque,
        allow_nondet=options.allow_nondet,
        error_rate=options.error_rate,
    )
    runner = TraceRunner(options, seed)
    cell_steps: list[int] = []
    for i in range(options.n_cells):
        if options.reset_every and i and i % options.reset_every == 0:
            runner.reset()
            cell_steps = []
        if cell_steps and rng.random() < options.checkout_rate:
            for _ in range(2 if options.poison_rate else 0):
                if rng.random() < options.poison_rate:
                    ref = rng.choice(cell_steps)
                    t = runner.step_t[ref]
                    node = runner.session.graph.node(t)
                    if node.delta:
                        runner.poison(ref, rng.choice(node.delta).covar)
            runner.checkout(rng.choice(cell_steps + [-1]))
        src = gen.cell(runner.session.state)
        try:
            runner.cell(src)
        except Exception as exc:  # noqa: BLE001
            runner._fail("crash", f"cell raised {exc!r}")
            break
        cell_steps.append(len(runner.steps) - 1)
    if cell_steps and options.checkout_rate:
        runner.checkout(rng.choice(cell_steps + [-1]))
    runner.finish()
    return runner


def _violations(runner: TraceRunner) -> set[str]:
    return {k for k, _ in runner.problems}


def minimize(steps: list[Step], options: FuzzOptions, seed: int, kinds: set[str]) -> list[Step]:
    """Greedily drop steps while some violation of ``kinds`` still appears."""

    def fails(candidate: list[Step]) -> bool:
        r = TraceRunner(options, seed)
        try:
            r.run_script(candidate)
        except Exception:  # a shrunk script may break in new ways; keep only same-kind failures
            return False
        return bool(_violations(r) & kinds)

    current = list(steps)
    i = len(current) - 1
    while i >= 0:
        trial = current[:i] + current[i + 1:]
        # step references are indices; shift those pointing past the removed step
        fixed = []
        for s in trial:
            if s.op != "cell" and s.ref >= i:
                s = Step(s.op, s.source, s.ref - 1 if s.ref > i else -2, s.covar)
            fixed.append(s)
        if fails(fixed):
            current = fixed
        i -= 1
    return current


def script_text(steps: list[Step]) -> str:
    """Render a trace in the workload format (``%% cell`` / ``%% checkout``)."""
    out = []
    cell_no = {}
    n = 0
    for i, s in enumerate(steps):
        if s.op == "cell":
            n += 1
            cell_no[i] = n
            out.append("%% cell")
            out.append(s.source)
        elif s.op == "checkout":
            label = "ROOT" if s.ref == -1 else f"t{cell_no.get(s.ref, '?')}"
            out.append(f"%% checkout {label}")
        else:
            label = f"t{cell_no.get(s.ref, '?')}"
            out.append(f"%% poison {label} {','.join(s.covar)}")
    return "\n".join(out) + "\n"


def fuzz(
    seed: int,
    n: int,
    options: FuzzOptions | None = None,
    stop_on_first: bool = True,
    shrink: bool = True,
    progress: Callable[[int, FuzzReport], None] | None = None,
) -> FuzzReport:
    """Run ``n`` random traces starting from ``seed``."""
    options = options or FuzzOptions()
    report = FuzzReport()
    for i in range(n):
        s = seed * 1_000_003 + i
        runner = generate_trace(s, options)
        report.counters["traces"] += 1
        for k, v in runner.counters.items():
            if not k.startswith("_"):
                report.counters[k] += v
        if runner.problems:
            kinds = _violations(runner)
            script = minimize(runner.steps, options, s, kinds) if shrink else runner.steps
            for kind, detail in runner.problems:
                report.counters[f"violations:{kind}"] += 1
                report.violations.append(Violation(kind, detail, s, script))
            if stop_on_first:
                break
        if progress is not None:
            progress(i, report)
    return report

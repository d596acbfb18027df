"""A versioned session: execute, detect, commit, and check out.

This is the library entry point; the CLI is a thin layer over it.
"""

from __future__ import annotations

import json
import logging
import random
import time
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path

from .blobstore import BlobStore, DirectoryBlobStore, MemoryBlobStore
from .cellscript import AccessLog, CellProgram, execute, parse
from .checkout import CheckoutEngine, CheckoutPlan, CheckoutReport
from .component import encode
from .detector import Detector, StateDelta
from .errors import CellRuntimeError, CorruptJournal, SpecError, UnknownTimestamp
from .graph import ROOT, CheckpointGraph
from .heap import Kind, State
from .journal import Journal

log = logging.getLogger(__name__)

CONFIG_FILE = "config"
JOURNAL_FILE = "graph.log"
BLOB_DIR = "blobs"
STATS_FILE = "stats.json"


@dataclass
class Config:
    snapshots: bool = True
    check_all: bool = False
    hash_fastpath: bool = False
    seed: int = 0
    misbehaving: tuple[str, ...] = ()
    self_heal: bool = False
    fsync: bool = True

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Config:
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SpecError(f"config line {lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in known:
                raise SpecError(f"config line {lineno}: unknown key {key!r}")
            default = getattr(cfg, key)
            if isinstance(default, bool):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise SpecError(f"config line {lineno}: {key} expects true/false")
                setattr(cfg, key, value.lower() in ("true", "1", "yes"))
            elif isinstance(default, int):
                setattr(cfg, key, int(value))
            else:
                setattr(cfg, key, tuple(v.strip() for v in value.split(",") if v.strip()))
        return cfg


@dataclass
class CellResult:
    t: int
    log: AccessLog
    delta: StateDelta
    output: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def error(self) -> CellRuntimeError | None:
        return self.log.error

    def summary(self) -> str:
        n = len(self.delta.updated)
        noun = "co-variable" if n == 1 else "co-variables"
        text = f"committed t{self.t}, {n} {noun} updated"
        if self.delta.deleted_names:
            text += f", {len(self.delta.deleted_names)} deleted"
        return text


def render(state: State, oid: int, limit: int = 200) -> str:
    """Readable text for a value; shared and cyclic references print as '...'."""
    out: list[str] = []
    budget = [limit]
    active: set[int] = set()

    def emit(s: str) -> None:
        out.append(s)
        budget[0] -= len(s)

    def walk(i: int) -> None:
        if budget[0] <= 0:
            return
        o = state.objects[i]
        k = o.kind
        if k is Kind.STR:
            emit(json.dumps(o.value))
        elif k is Kind.BOOL:
            emit("true" if o.value else "false")
        elif k is Kind.NONE:
            emit("none")
        elif k in (Kind.INT, Kind.FLOAT):
            emit(repr(o.value))
        elif k is Kind.OPAQUE:
            emit(f"<opaque {o.value}>")
        elif i in active:
            emit("...")
        else:
            active.add(i)
            if k is Kind.LIST:
                emit("list(")
                for n, c in enumerate(o.children):
                    if n:
                        emit(", ")
                    walk(c)
                emit(")")
            else:
                emit("map{" if k is Kind.MAP else "record{")
                for n, key in enumerate(sorted(o.children)):
                    if n:
                        emit(", ")
                    emit((json.dumps(key) if k is Kind.MAP else key) + ": ")
                    walk(o.children[key])
                emit("}")
            active.discard(i)

    walk(oid)
    text = "".join(out)
    return text if budget[0] > 0 else text[:limit] + "..."


class Session:
    """Live state plus its checkpoint history.

    With ``path=None`` everything lives in memory. With a directory, the
    journal and blobs persist and reopening replays the journal; the live
    state is rebuilt from checkpoints the first time it is needed.
    """

    def __init__(self, path: str | Path | None = None, config: Config | None = None, store: BlobStore | None = None):
        self.path = Path(path) if path is not None else None
        if self.path is not None and (self.path / CONFIG_FILE).exists() and config is None:
            config = Config.from_text((self.path / CONFIG_FILE).read_text())
        self.config = config or Config()
        self.state = State()
        self.detector = Detector(self.config.check_all, self.config.hash_fastpath)
        self._state_ready = True
        if self.path is None:
            self.store = store or MemoryBlobStore()
            self.graph = CheckpointGraph(self.store, None, self.config.snapshots)
        else:
            self.path.mkdir(parents=True, exist_ok=True)
            cfg_path = self.path / CONFIG_FILE
            if not cfg_path.exists():
                cfg_path.write_text(self.config.to_text())
            self.store = store or DirectoryBlobStore(self.path / BLOB_DIR, fsync=self.config.fsync)
            journal_path = self.path / JOURNAL_FILE
            existed = journal_path.exists()
            journal = Journal(journal_path, fsync=self.config.fsync)
            if existed:
                self.graph = CheckpointGraph.load(journal, self.store, self.config.snapshots)
                self._state_ready = self.graph.head == ROOT
            else:
                self.graph = CheckpointGraph(self.store, journal, self.config.snapshots)
        self.engine = CheckoutEngine(self.graph, self.store, self.config.self_heal)
        self.timings: Counter = Counter()
        self.cell_count = 0

    @classmethod
    def is_session_dir(cls, path: str | Path) -> bool:
        return (Path(path) / JOURNAL_FILE).exists()

    @property
    def head(self) -> int:
        return self.graph.head

    @property
    def counters(self) -> Counter:
        return self.detector.counters

    # state ------------------------------------------------------------

    def ensure_state(self) -> None:
        """Rebuild the live state for the head if this process has none yet."""
        if self._state_ready:
            return
        self.engine.checkout(self.state, self.detector, self.graph.head, current=ROOT, move_head=False)
        self._state_ready = True

    # cells ------------------------------------------------------------

    def run(self, source: str | CellProgram) -> CellResult:
        """Execute one cell and commit its checkpoint.

        Syntax errors raise before anything runs. Runtime errors are kept
        on the result; the partial effects are committed like any other.
        """
        program = source if isinstance(source, CellProgram) else parse(source, self.cell_count + 1)
        self.ensure_state()
        rng = random.Random(f"{self.config.seed}:{self.graph._next_t}")

        t0 = time.perf_counter()
        cell_log = execute(program, self.state, rng)
        self.state.collect()
        t1 = time.perf_counter()
        delta = self.detector.detect(self.state, cell_log)
        t2 = time.perf_counter()
        parent_state = self.graph.session_state(self.graph.head)
        reads = [(c, parent_state[c]) for c in delta.accessed_covariables]
        updated = []
        for cov, _ in delta.updated:
            comp = encode(self.state, cov.members, self.config.misbehaving)
            updated.append((cov.members, comp.to_bytes() if comp else None))
        t = self.graph.commit(updated, program.source, reads, delta.deleted_names, cell_log.nondeterministic)
        t3 = time.perf_counter()

        self.cell_count += 1
        timings = {
            "execute_ms": (t1 - t0) * 1000,
            "detect_ms": (t2 - t1) * 1000,
            "write_ms": (t3 - t2) * 1000,
        }
        timings["checkpoint_ms"] = timings["detect_ms"] + timings["write_ms"]
        for k, v in timings.items():
            self.timings[k] += v
        output = None
        if cell_log.result is not None and cell_log.result in self.state.objects and cell_log.error is None:
            output = render(self.state, cell_log.result)
        return CellResult(t, cell_log, delta, output, timings, list(self.graph.node(t).warnings))

    # time travel ------------------------------------------------------

    def resolve(self, ref: str | int) -> int:
        """Accept 5, "5", "t5", "ROOT", "HEAD", or "HEAD~n"."""
        if isinstance(ref, int):
            t = ref
        else:
            s = ref.strip()
            up = s.upper()
            if up == "ROOT":
                t = ROOT
            elif up.startswith("HEAD"):
                t = self.graph.head
                rest = s[4:]
                steps = int(rest[1:] or 1) if rest.startswith("~") else 0 if not rest else None
                if steps is None:
                    raise UnknownTimestamp(ref)
                for _ in range(steps):
                    parent = self.graph.node(t).parent
                    t = parent if parent is not None else t
            else:
                if s[:1] in ("t", "T"):
                    s = s[1:]
                try:
                    t = int(s)
                except ValueError:
                    raise UnknownTimestamp(ref) from None
        self.graph.node(t)
        return t

    def plan(self, target: str | int) -> CheckoutPlan:
        return self.engine.plan(self.graph.head, self.resolve(target))

    def checkout(self, target: str | int) -> CheckoutReport:
        t = self.resolve(target)
        if not self._state_ready:
            # nothing live in this process yet: build the target from scratch
            previous = self.graph.head
            report = self.engine.checkout(self.state, self.detector, t, current=ROOT)
            report.previous = previous
            self._state_ready = True
            return report
        return self.engine.checkout(self.state, self.detector, t)

    def undo(self) -> CheckoutReport:
        return self.checkout("HEAD~1")

    # introspection ----------------------------------------------------

    def names(self) -> list[str]:
        if self._state_ready:
            return self.state.names()
        return sorted(n for covar in self.graph.session_state(self.graph.head) for n in covar)

    def stats(self) -> dict:
        out = {
            "head": self.graph.head,
            "nodes": len(self.graph) - 1,
            "cells_run": self.cell_count,
        }
        out.update(self.detector.counters)
        out.update({k: round(v, 3) for k, v in self.timings.items()})
        out.update({f"store_{k}": v for k, v in self.store.stats.items()})
        if self.graph.journal is not None:
            out["journal_bytes"] = self.graph.journal.size()
        return out

    def persist_stats(self) -> None:
        if self.path is None:
            return
        p = self.path / STATS_FILE
        total: Counter = Counter()
        if p.exists():
            try:
                total.update(json.loads(p.read_text()))
            except (ValueError, TypeError):
                pass
        for k, v in self.detector.counters.items():
            if k != "covariables_total":
                total[k] += v
        total["covariables_total"] = len(self.graph.session_state(self.graph.head))
        for k, v in self.timings.items():
            total[k] = round(total.get(k, 0) + v, 3)
        total["cells_run"] += self.cell_count
        p.write_text(json.dumps(dict(total), indent=1, sort_keys=True))

    def load_stats(self) -> dict:
        if self.path is None or not (self.path / STATS_FILE).exists():
            return {}
        try:
            return json.loads((self.path / STATS_FILE).read_text())
        except ValueError as exc:
            raise CorruptJournal(f"unreadable stats file: {exc}") from None

"""Workload runner producing per-cell and per-checkout metrics.

A workload is plain text: ``key = value`` header lines, then blocks that
start with a directive line::

    name = touch-1-of-20
    systems = incremental, full-dump, check-all

    %% cell
    s = "x" * 1000
    %% cell *50
    d{i%20}[{i}] = "y" * 1000
    %% undo
    %% checkout t3

``%% cell *N`` repeats its block N times; ``{i}`` expands to the repetition
index and ``{i%M}`` to that index modulo M. Checkout targets accept
anything a session resolves (``t5``, ``ROOT``, ``HEAD~2``).
"""

from __future__ import annotations

import csv
import io
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .blobstore import DirectoryBlobStore, MemoryBlobStore, make_key
from .component import Component, encode, materialize
from .errors import ChronoError, SpecError
from .session import Config, Session

SYSTEMS = ("incremental", "full-dump", "check-all")
HEADER_KEYS = {"name", "systems", "seed", "snapshots", "hash_fastpath", "persist"}
_TEMPLATE = re.compile(r"\{i(?:%(\d+))?\}")


@dataclass
class Op:
    kind: str  # "cell" | "checkout" | "undo"
    source: str = ""
    target: str = ""


@dataclass
class Workload:
    name: str = "workload"
    systems: tuple[str, ...] = ("incremental", "full-dump")
    seed: int = 0
    snapshots: bool = True
    hash_fastpath: bool = False
    persist: bool = False
    ops: list[Op] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return sum(op.kind == "cell" for op in self.ops)


def _expand(template: str, i: int) -> str:
    return _TEMPLATE.sub(lambda m: str(i % int(m.group(1)) if m.group(1) else i), template)


def _bool(key: str, value: str, lineno: int) -> bool:
    v = value.lower()
    if v not in ("true", "false", "1", "0", "yes", "no"):
        raise SpecError(f"line {lineno}: {key} expects true/false, got {value!r}")
    return v in ("true", "1", "yes")


def parse_workload(text: str) -> Workload:
    wl = Workload()
    lines = text.splitlines()
    i = 0
    # header
    while i < len(lines) and not lines[i].startswith("%%"):
        raw = lines[i].strip()
        i += 1
        if not raw or raw.startswith("#"):
            continue
        if "=" not in raw:
            raise SpecError(f"line {i}: expected key = value or a %% directive")
        key, value = (p.strip() for p in raw.split("=", 1))
        if key not in HEADER_KEYS:
            raise SpecError(f"line {i}: unknown workload key {key!r}")
        if key == "name":
            wl.name = value
        elif key == "systems":
            systems = tuple(s.strip() for s in value.split(",") if s.strip())
            bad = [s for s in systems if s not in SYSTEMS]
            if bad or not systems:
                raise SpecError(f"line {i}: unknown system(s) {bad}; choose from {', '.join(SYSTEMS)}")
            wl.systems = systems
        elif key == "seed":
            try:
                wl.seed = int(value)
            except ValueError:
                raise SpecError(f"line {i}: seed must be an integer") from None
        else:
            setattr(wl, key, _bool(key, value, i))
    # blocks
    while i < len(lines):
        head = lines[i]
        lineno = i + 1
        i += 1
        body = []
        while i < len(lines) and not lines[i].startswith("%%"):
            body.append(lines[i])
            i += 1
        parts = head[2:].split()
        if not parts:
            raise SpecError(f"line {lineno}: empty directive")
        kind, args = parts[0], parts[1:]
        if kind == "cell":
            reps = 1
            if args:
                if len(args) != 1 or not args[0].startswith("*") or not args[0][1:].isdigit():
                    raise SpecError(f"line {lineno}: expected '%% cell' or '%% cell *N'")
                reps = int(args[0][1:])
            src = "\n".join(body).strip("\n")
            if not src.strip():
                raise SpecError(f"line {lineno}: empty cell")
            for r in range(reps):
                wl.ops.append(Op("cell", _expand(src, r) if args else src))
        elif kind == "checkout":
            if len(args) != 1:
                raise SpecError(f"line {lineno}: checkout takes one target")
            wl.ops.append(Op("checkout", target=args[0]))
        elif kind == "undo":
            if args:
                raise SpecError(f"line {lineno}: undo takes no arguments")
            wl.ops.append(Op("undo"))
        else:
            raise SpecError(f"line {lineno}: unknown directive {kind!r}")
        if kind != "cell" and any(b.strip() for b in body):
            raise SpecError(f"line {lineno}: {kind} takes no body")
    if not wl.ops:
        raise SpecError("workload has no cells")
    return wl


def load_workload(path: str | Path) -> Workload:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read workload {path}: {exc}") from None
    return parse_workload(text)


# systems -------------------------------------------------------------------


class FullDump:
    """Baseline that serializes the entire state after every cell.

    Checkouts load the target's whole dump. Runs on top of a session so
    execution and history are identical to the incremental system.
    """

    def __init__(self, session: Session, store):
        self.session = session
        self.store = store
        self.dumps: dict[int, object] = {}

    def checkpoint(self, t: int) -> int:
        st = self.session.state
        comp = encode(st, sorted(st.bindings))
        if not comp:
            return 0  # unserializable state: the baseline cannot store it
        payload = comp.to_bytes()
        key = make_key(("*",), t, payload)
        self.store.put(key, payload)
        self.dumps[t] = key
        return len(payload)

    def checkout(self, t: int) -> tuple[int, bool]:
        """Load the dump for ``t`` into the live state; returns (bytes, ok)."""
        st = self.session.state
        if t == 0:
            st.bindings.clear()
            st.collect()
            return 0, True
        key = self.dumps.get(t)
        if key is None:
            return 0, False
        data = self.store.get(key)
        st.bindings.clear()
        materialize(st, Component.from_bytes(data))
        st.collect()
        self.session.detector.reset(st)
        self.session.graph.move_head(t)
        return len(data), True


ROW_FIELDS = (
    "system",
    "step",
    "op",
    "t",
    "checkpoint_bytes",
    "cumulative_bytes",
    "execute_ms",
    "detect_ms",
    "write_ms",
    "checkpoint_ms",
    "loaded_bytes",
    "blobs_loaded",
    "cells_replayed",
    "checkout_ms",
    "vargraph_rebuilds",
    "candidates_checked",
    "covariables_total",
    "metadata_bytes",
)


@dataclass
class BenchResult:
    workload: Workload
    rows: list[dict] = field(default_factory=list)
    summary: dict[str, dict] = field(default_factory=dict)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (round(v, 4) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        out = []
        for system, s in self.summary.items():
            out.append(
                f"{system}: {s['cells']} cells, {s['cumulative_bytes']} checkpoint bytes, "
                f"{s['loaded_bytes']} bytes loaded over {s['checkouts']} checkout(s), "
                f"{s['vargraph_rebuilds']} vargraph rebuilds"
            )
        inc, full = self.summary.get("incremental"), self.summary.get("full-dump")
        if inc and full and full["cumulative_bytes"]:
            out.append(f"incremental/full-dump storage ratio: {inc['cumulative_bytes'] / full['cumulative_bytes']:.4f}")
        chk = self.summary.get("check-all")
        if inc and chk and chk["vargraph_rebuilds"]:
            out.append(f"pruned/check-all rebuild ratio: {inc['vargraph_rebuilds'] / chk['vargraph_rebuilds']:.4f}")
        return out


def _session_for(wl: Workload, system: str, tmp: Path | None) -> Session:
    cfg = Config(
        seed=wl.seed,
        snapshots=wl.snapshots,
        hash_fastpath=wl.hash_fastpath,
        check_all=system == "check-all",
        fsync=False,
    )
    if tmp is not None and system != "full-dump":
        return Session(tmp / system, cfg)
    return Session(config=cfg)


def run_system(wl: Workload, system: str, tmp: Path | None = None) -> tuple[list[dict], dict]:
    if system not in SYSTEMS:
        raise SpecError(f"unknown system {system!r}")
    session = _session_for(wl, system, tmp if wl.persist else None)
    dump = None
    if system == "full-dump":
        store = DirectoryBlobStore(tmp / "full-dump", fsync=False) if tmp is not None else MemoryBlobStore()
        dump = FullDump(session, store)
    rows: list[dict] = []
    cumulative = 0
    totals = {"cells": 0, "cumulative_bytes": 0, "checkouts": 0, "loaded_bytes": 0, "vargraph_rebuilds": 0,
              "checkpoint_ms": 0.0, "checkout_ms": 0.0}
    for step, op in enumerate(wl.ops):
        row = dict.fromkeys(ROW_FIELDS, "")
        row.update(system=system, step=step, op=op.kind)
        before = session.counters["vargraph_rebuilds"]
        cands_before = session.counters["candidates_checked"]
        if op.kind == "cell":
            written = session.store.stats["bytes_written"]
            result = session.run(op.source)
            if dump is not None:
                t0 = time.perf_counter()
                nbytes = dump.checkpoint(result.t)
                write_ms = (time.perf_counter() - t0) * 1000
                timings = {"execute_ms": result.timings["execute_ms"], "detect_ms": 0.0, "write_ms": write_ms,
                           "checkpoint_ms": write_ms}
            else:
                nbytes = session.store.stats["bytes_written"] - written
                timings = result.timings
            cumulative += nbytes
            row.update(t=result.t, checkpoint_bytes=nbytes, cumulative_bytes=cumulative, **timings)
            totals["cells"] += 1
            totals["checkpoint_ms"] += timings["checkpoint_ms"]
        else:
            target = session.resolve("HEAD~1" if op.kind == "undo" else op.target)
            t0 = time.perf_counter()
            if dump is not None:
                loaded, ok = dump.checkout(target)
                if not ok:
                    raise SpecError(f"full-dump baseline has no dump for t{target}")
                row.update(loaded_bytes=loaded, blobs_loaded=int(target != 0), cells_replayed=0)
            else:
                try:
                    rep = session.checkout(target)
                except ChronoError as exc:
                    raise SpecError(f"step {step}: checkout to t{target} failed: {exc}") from exc
                loaded = rep.loaded_bytes
                row.update(loaded_bytes=loaded, blobs_loaded=rep.blobs_loaded, cells_replayed=rep.cells_replayed)
            ms = (time.perf_counter() - t0) * 1000
            row.update(t=target, checkout_ms=ms)
            totals["checkouts"] += 1
            totals["loaded_bytes"] += loaded
            totals["checkout_ms"] += ms
        row["vargraph_rebuilds"] = session.counters["vargraph_rebuilds"] - before
        row["candidates_checked"] = session.counters["candidates_checked"] - cands_before
        row["covariables_total"] = len(session.detector.partition)
        if session.graph.journal is not None:
            row["metadata_bytes"] = session.graph.journal.size()
        rows.append(row)
    totals["cumulative_bytes"] = cumulative
    totals["vargraph_rebuilds"] = session.counters["vargraph_rebuilds"]
    return rows, totals


def run_workload(wl: Workload, systems: tuple[str, ...] | None = None) -> BenchResult:
    result = BenchResult(wl)
    with tempfile.TemporaryDirectory(prefix="chrono-bench-") as d:
        for system in systems or wl.systems:
            rows, totals = run_system(wl, system, Path(d))
            result.rows.extend(rows)
            result.summary[system] = totals
    return result


# built-in workloads ----------------------------------------------------------


def touch_one_of_n(n_lists: int = 20, n_items: int = 1000, item_len: int = 1000, n_cells: int = 50,
                   undo: bool = True) -> str:
    """Disjoint list Co-variables of ``n_items * item_len`` bytes; each cell mutates one."""
    setup = [f's = "x" * {item_len}']
    for k in range(n_lists):
        setup.append(f"d{k} = list()\nfor j in 0..{n_items} {{\n  append(d{k}, s + \"\")\n}}")
    text = [
        f"name = touch-1-of-{n_lists}",
        "systems = incremental, full-dump",
        "",
        "%% cell",
        "\n".join(setup),
        f"%% cell *{n_cells}",
        f'd{{i%{n_lists}}}[{{i%{n_items}}}] = "y" * {item_len}',
    ]
    if undo:
        text.append("%% undo")
    return "\n".join(text) + "\n"


def scalability(n_cells: int = 1000, n_names: int = 40) -> str:
    """Many small commits over a bounded namespace, journaled to disk."""
    return (
        f"name = scalability-{n_cells}\n"
        "systems = incremental\n"
        "persist = true\n\n"
        f"%% cell *{n_cells}\n"
        f"x{{i%{n_names}}} = list({{i}}, {{i%7}})\n"
    )


def ablation(n_covars: int = 40, n_cells: int = 50) -> str:
    """A state of ``n_covars`` Co-variables; every cell touches one name."""
    setup = "\n".join(f"c{k} = list({k}, {k + 1}, record{{a: {k}}})" for k in range(n_covars))
    return (
        f"name = ablation-{n_covars}\n"
        "systems = incremental, check-all\n\n"
        f"%% cell\n{setup}\n"
        f"%% cell *{n_cells}\n"
        f"append(c{{i%{n_covars}}}, {{i}})\n"
    )


BUILTIN = {"touch-1-of-20": touch_one_of_n, "scalability": scalability, "ablation": ablation}


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares line through (xs, ys); returns (slope, intercept, r_squared)."""
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    syy = sum((y - my) ** 2 for y in ys)
    slope = sxy / sxx
    intercept = my - slope * mx
    r2 = 1.0 if syy == 0 else (sxy * sxy) / (sxx * syy)
    return slope, intercept, r2

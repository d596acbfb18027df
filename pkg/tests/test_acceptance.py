"""Acceptance suite: one test per criterion, each at its stated threshold.

Every test records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary and when this file is run as a script.
"""

from __future__ import annotations

import sys
import tempfile
import time
from pathlib import Path

import pytest

from chronostate import Config, Session
from chronostate.bench import ablation, linear_fit, parse_workload, run_system, touch_one_of_n
from chronostate.cli import main as cli_main
from chronostate.errors import RestoreFailed
from chronostate.fuzz import FuzzOptions, fuzz
from chronostate.heap import deep_equal

RESULTS: dict[int, tuple[bool, str]] = {}

N_TRACES = 1000
N_DETECTION_CELLS = 100_000

FIG_CELLS = (
    "df = list(1, 2, 3)\ngmm = record{k: 0, w: none}",
    "gmm.k = len(df)",
    "plot = record{model: gmm.k + 1}",
)


def record(n: int, ok: bool, text: str) -> None:
    RESULTS[n] = (ok, text)
    print(summary_line(n))


def summary_line(n: int) -> str:
    ok, text = RESULTS[n]
    return f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {text}"


# shared corpora ----------------------------------------------------------------

_cache: dict[str, object] = {}


def trace_corpus():
    """Deterministic traces with branching, random checkouts and blob poisoning."""
    if "traces" not in _cache:
        t0 = time.perf_counter()
        opts = FuzzOptions(n_cells=30, max_names=40, checkout_rate=0.25, poison_rate=0.3, diff_pairs=3)
        report = fuzz(20_251, N_TRACES, opts, stop_on_first=False, shrink=False)
        _cache["traces"] = (report, time.perf_counter() - t0)
    return _cache["traces"]


def detection_corpus():
    """Long mutation-heavy traces run only through the per-cell checks."""
    if "detection" not in _cache:
        t0 = time.perf_counter()
        opts = FuzzOptions(n_cells=250, max_names=14, checkout_rate=0.03, check_checkouts=False,
                           check_graph=False, reset_every=125)
        n_traces = -(-N_DETECTION_CELLS // opts.n_cells)
        report = fuzz(77, n_traces, opts, stop_on_first=False, shrink=False)
        _cache["detection"] = (report, time.perf_counter() - t0)
    return _cache["detection"]


def violations(report, *kinds: str) -> int:
    return sum(report.counters[f"violations:{k}"] for k in kinds)


# criteria ---------------------------------------------------------------------


def test_c01_oracle_exactness():
    report, secs = trace_corpus()
    c = report.counters
    bad = violations(report, "inexact-checkout", "unexpected-restore-failure", "crash", "atomicity",
                     "intrusive-checkout", "idempotence")
    ok = c["traces"] >= N_TRACES and bad == 0 and secs < 300 and c["checkouts"] > 0
    record(1, ok, f"{c['traces']} traces, {c['checkouts']} checkouts ({c['cells_replayed']} replayed cells), "
                  f"{bad} inexact, {secs:.0f}s (limit 300s)")
    assert ok, [str(v) for v in report.violations[:5]]


def test_c02_no_false_negatives():
    det, _ = detection_corpus()
    tr, _ = trace_corpus()
    cells = det.counters["cells"] + tr.counters["cells"]
    misses = violations(det, "false-negative") + violations(tr, "false-negative")
    fp = (det.counters["false_positives"] + tr.counters["false_positives"]) / max(
        1, det.counters["detected_updates"] + tr.counters["detected_updates"])
    ok = det.counters["cells"] >= N_DETECTION_CELLS and misses == 0
    record(2, ok, f"{cells} cell executions ({det.counters['cells']} in the detection corpus), {misses} missed "
                  f"updates, false-positive rate {fp:.4f}")
    assert ok


def test_c03_pruning_soundness():
    det, _ = detection_corpus()
    tr, _ = trace_corpus()
    bad = sum(violations(r, "pruning-unsound", "access-completeness", "work-bound") for r in (det, tr))
    record(3, bad == 0, f"{bad} changes outside the candidate set over "
                        f"{det.counters['cells'] + tr.counters['cells']} cells")
    assert bad == 0


def test_c04_partition_correctness():
    det, _ = detection_corpus()
    tr, _ = trace_corpus()
    bad = sum(violations(r, "partition") for r in (det, tr))
    record(4, bad == 0, f"{bad} partition mismatches over {det.counters['cells'] + tr.counters['cells']} states")
    assert bad == 0


def test_c05_diff_soundness():
    report, _ = trace_corpus()
    c = report.counters
    bad = violations(report, "diff-unsound", "lca")
    rate = report.false_diverged_rate()
    record(5, bad == 0 and c["diffs_checked"] > 0,
           f"{c['diffs_checked']} branch pairs, {bad} unsound identical marks, false-diverged rate {rate:.4f}")
    assert bad == 0


@pytest.fixture(scope="module")
def touch_workload():
    if "touch" not in _cache:
        wl = parse_workload(touch_one_of_n(n_lists=20, n_items=1000, item_len=1000, n_cells=50, undo=True))
        with tempfile.TemporaryDirectory(prefix="chrono-acc-") as d:
            t0 = time.perf_counter()
            inc_rows, inc = run_system(wl, "incremental", Path(d))
            full_rows, full = run_system(wl, "full-dump", Path(d))
            secs = time.perf_counter() - t0
        _cache["touch"] = (inc_rows, inc, full_rows, full, secs)
    return _cache["touch"]


def test_c06_incremental_storage_ratio(touch_workload):
    _, inc, _, full, secs = touch_workload
    ratio = inc["cumulative_bytes"] / full["cumulative_bytes"]
    ok = ratio <= 0.25 and secs < 60
    record(6, ok, f"incremental {inc['cumulative_bytes']} B vs full-dump {full['cumulative_bytes']} B, "
                  f"ratio {ratio:.4f} (limit 0.25), {secs:.1f}s (limit 60s)")
    assert ok


def test_c07_minimal_checkout_loading(touch_workload):
    inc_rows, _, full_rows, _, _ = touch_workload
    undo = [r for r in inc_rows if r["op"] == "undo"][-1]
    full_undo = [r for r in full_rows if r["op"] == "undo"][-1]
    ok = undo["loaded_bytes"] <= 1_200_000
    record(7, ok, f"undo loaded {undo['loaded_bytes']} B in {undo['blobs_loaded']} blob(s) (limit 1.2 MB); "
                  f"full-dump undo loaded {full_undo['loaded_bytes']} B")
    assert ok


def _fig_session() -> Session:
    s = Session()
    for src in FIG_CELLS:
        s.run(src)
    s.checkout(1)
    s.run("x = 5")
    s.run("x = x + 1")
    return s


def test_c08_fallback_recovery():
    s = _fig_session()
    s.store.poison(s.graph.vcv(("plot",), 3).blob)
    one = s.checkout(3).cells_replayed
    exact1 = deep_equal(s.state, _replay(s, 3))
    s = _fig_session()
    s.store.poison(s.graph.vcv(("plot",), 3).blob)
    s.store.poison(s.graph.vcv(("gmm",), 2).blob)
    two = s.checkout(3).cells_replayed
    exact2 = deep_equal(s.state, _replay(s, 3))
    ok = one == 1 and two == 2 and exact1 and exact2
    record(8, ok, f"one poisoned blob -> {one} replayed cell(s); chain of two -> {two} (expected 1 and 2), "
                  f"states exact: {exact1 and exact2}")
    assert ok


def _replay(s: Session, t: int):
    from chronostate.fuzz.oracles import replay_from_scratch

    return replay_from_scratch(s.graph, t, s.config.seed)


def test_c09_unsupported_case_signaling(tmp_path, monkeypatch, capsys):
    # library: the live state survives a failed checkout untouched
    s = Session()
    s.run('g = opaque_nondet("rng")')
    s.run("y = list(1)")
    s.checkout(0)
    s.run("z = record{a: 1}")
    before = s.state.copy()
    head = s.head
    try:
        s.checkout(2)
        raised = False
    except RestoreFailed:
        raised = True
    unchanged = s.head == head and s.state.bindings == before.bindings and deep_equal(s.state, before)
    # CLI: exit code 3, head unchanged
    monkeypatch.setenv("CHRONO_SESSION", str(tmp_path / "sess"))
    script = tmp_path / "cells.cs"
    script.write_text('g = opaque_nondet("rng")\n# %%\ny = list(1)\n')
    cli_main(["init", "--no-fsync"])
    cli_main(["run", str(script)])
    cli_main(["checkout", "ROOT"])
    code = cli_main(["checkout", "t2"])
    cli_head = Session(tmp_path / "sess").head
    capsys.readouterr()
    ok = raised and unchanged and code == 3 and cli_head == 0
    record(9, ok, f"RestoreFailed raised: {raised}, live state unchanged: {unchanged}, CLI exit code {code}, "
                  f"head kept at t{cli_head}")
    assert ok


def test_c10_scalability(tmp_path):
    fits = {}
    for label, snapshots, cell in (("snapshots", True, "x{i%40} = list({i}, {i%7})"),
                                   ("no-snapshots", False, "y{i} = list({i}, {i%7})")):
        s = Session(tmp_path / label, Config(snapshots=snapshots, fsync=False))
        xs, ys = [], []
        for i in range(1000):
            s.run(cell.replace("{i%40}", str(i % 40)).replace("{i%7}", str(i % 7)).replace("{i}", str(i)))
            xs.append(i + 1)
            ys.append(s.graph.journal.size())
        fits[label] = linear_fit(xs, ys)[2]
        if snapshots:
            g = s.graph
            t0 = time.perf_counter()
            d = g.diff(g.head, 1)
            diff_ms = (time.perf_counter() - t0) * 1000
            depth = g.node(g.head).depth - g.node(d.lca).depth
    ok = all(r2 >= 0.99 for r2 in fits.values()) and diff_ms <= 250
    record(10, ok, "metadata R^2 " + ", ".join(f"{k} {v:.5f}" for k, v in fits.items())
           + f" (limit 0.99); diff over a {depth}-deep undo {diff_ms:.1f} ms (limit 250 ms)")
    assert ok


def test_c11_ablation_direction():
    wl = parse_workload(ablation(n_covars=40, n_cells=50))
    _, pruned = run_system(wl, "incremental")
    _, full = run_system(wl, "check-all")
    per_pruned = pruned["vargraph_rebuilds"] / 50
    per_full = full["vargraph_rebuilds"] / 50
    ratio = per_pruned / per_full
    ok = ratio <= 0.1
    record(11, ok, f"vargraph rebuilds per cell {per_pruned:.1f} pruned vs {per_full:.1f} check-all, "
                   f"ratio {ratio:.4f} (limit 0.1)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

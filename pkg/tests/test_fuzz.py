from __future__ import annotations

from chronostate import detector
from chronostate.fuzz import FuzzOptions, fuzz, script_text
from chronostate.fuzz.harness import Step, TraceRunner
from chronostate.graph import CheckpointGraph


def test_seed_one_passes():
    report = fuzz(1, 100, FuzzOptions(n_cells=15, max_names=12, poison_rate=0.3))
    assert report.ok, [str(v) for v in report.violations[:3]]
    assert report.counters["checkouts"] > 50


def test_poison_heavy_nondeterministic_run_is_exact_or_fails_cleanly():
    report = fuzz(2, 60, FuzzOptions(n_cells=20, max_names=8, poison_rate=0.9, checkout_rate=0.4, allow_nondet=True))
    assert report.ok, [str(v) for v in report.violations[:3]]
    assert report.counters["restore_failed"] > 0 and report.counters["cells_replayed"] > 0


def test_pruning_mutant_is_caught_and_minimized(monkeypatch):
    original = detector.candidates

    def drop_last(prev, log):
        c = original(prev, log)
        return c[:-1] if len(c) > 1 else c

    monkeypatch.setattr(detector, "candidates", drop_last)
    report = fuzz(3, 50, FuzzOptions(n_cells=30, max_names=10))
    kinds = {v.kind for v in report.violations}
    assert "false-negative" in kinds or "pruning-unsound" in kinds or "partition" in kinds
    script = report.violations[0].script
    assert 0 < len(script) <= 30
    assert script_text(script).startswith("%% cell")


def test_unsound_diff_mutant_is_caught(monkeypatch):
    original = CheckpointGraph.diff

    def lying_diff(self, a, b):
        d = original(self, a, b)
        if d.to_load:
            v = d.to_load.pop()
            d.identical.add(v.covar)
        return d

    monkeypatch.setattr(CheckpointGraph, "diff", lying_diff)
    report = fuzz(3, 30, FuzzOptions(n_cells=20, max_names=10))
    assert not report.ok


def test_script_replay_reproduces_trace():
    steps = [Step("cell", "a = list(1)"), Step("cell", "b = a\nappend(b, 2)"), Step("checkout", ref=0),
             Step("cell", "a = 3"), Step("checkout", ref=1), Step("poison", ref=1, covar=("a", "b")),
             Step("checkout", ref=-1), Step("checkout", ref=1)]
    r = TraceRunner(FuzzOptions())
    r.run_script(steps)
    assert not r.problems and r.counters["cells_replayed"] == 1
    text = script_text(steps)
    assert "%% checkout t1" in text and "%% poison t2 a,b" in text and "%% checkout ROOT" in text

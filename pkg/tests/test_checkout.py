from __future__ import annotations

import random

import pytest

from chronostate import Config, Session
from chronostate.errors import RestoreFailed
from chronostate.fuzz import FuzzOptions, generate_trace
from chronostate.fuzz.oracles import min_replays_exhaustive, replay_from_scratch
from chronostate.graph import ROOT
from chronostate.heap import deep_equal

from .conftest import run_fig


def poison(s: Session, covar: tuple[str, ...], t: int) -> None:
    s.store.poison(s.graph.vcv(covar, t).blob)


def test_fig_checkout_loads_only_diverged(fig):
    df_before = fig.state.bindings["df"]
    rep = fig.checkout(3)
    assert rep.blobs_loaded == 2 and rep.cells_replayed == 0 and rep.identical == 1
    assert fig.state.bindings["df"] == df_before  # untouched
    assert "x" not in fig.state.bindings
    assert deep_equal(fig.state, replay_from_scratch(fig.graph, 3))
    assert fig.head == 3


def test_checkout_head_is_noop(fig):
    rep = fig.checkout(fig.head)
    assert rep.noop and rep.loaded_bytes == 0 and rep.cells_replayed == 0


def test_one_poisoned_blob_replays_one_cell(fig):
    poison(fig, ("plot",), 3)
    plan = fig.plan(3)
    assert plan.replays == [3] and list(plan.fallbacks.values()) == [[3]]
    rep = fig.checkout(3)
    assert rep.cells_replayed == 1
    assert deep_equal(fig.state, replay_from_scratch(fig.graph, 3))


def test_poisoned_chain_replays_recursively(fig):
    poison(fig, ("plot",), 3)
    poison(fig, ("gmm",), 2)
    rep = fig.checkout(3)
    assert rep.cells_replayed == 2
    assert deep_equal(fig.state, replay_from_scratch(fig.graph, 3))


def test_truncated_blob_falls_back(fig):
    fig.store.truncate(fig.graph.vcv(("plot",), 3).blob, 4)
    assert fig.checkout(3).cells_replayed == 1


def test_self_heal_rewrites_blob():
    s = run_fig(Session(config=Config(self_heal=True)))
    poison(s, ("plot",), 3)
    s.checkout(3)
    assert s.store.check(s.graph.vcv(("plot",), 3).blob)
    s.checkout(5)
    assert s.checkout(3).cells_replayed == 0


def test_opaque_restored_by_replay():
    s = Session()
    s.run('g = opaque("gen")\nn = 1')
    s.run("n = 2")
    assert s.graph.vcv(("g",), 1).missing
    rep = s.checkout(ROOT)
    rep = s.checkout(2)
    assert rep.cells_replayed == 1
    assert deep_equal(s.state, replay_from_scratch(s.graph, 2))


@pytest.mark.parametrize("cell", ['g = opaque_nondet("rng")', "r = rand()"])
def test_nondeterministic_missing_blob_fails_cleanly(cell):
    s = Session()
    s.run(cell)
    s.run("other = list(1)")
    if cell.startswith("r"):
        poison(s, ("r",), 1)
    s.checkout(ROOT)
    s.run("keep = record{a: 1}")
    before = s.state.copy()
    head = s.head
    with pytest.raises(RestoreFailed, match="nondeterministic"):
        s.checkout(2)
    assert s.head == head and s.state.bindings == before.bindings and deep_equal(s.state, before)
    s.run("keep.a = 2")  # the session stays usable


def test_failure_during_staging_is_atomic(fig, monkeypatch):
    before = fig.state.copy()
    calls = []

    def broken_get(key):
        calls.append(key)
        from chronostate.errors import CorruptBlob

        raise CorruptBlob("disk on fire")

    monkeypatch.setattr(fig.store, "get", broken_get)
    with pytest.raises(RestoreFailed):
        fig.checkout(3)
    assert calls and fig.head == 5 and deep_equal(fig.state, before) and fig.state.bindings == before.bindings


def test_idempotence_and_branch_round_trip(fig):
    fig.checkout(3)
    first = fig.state.copy()
    again = fig.checkout(3)
    assert again.loaded_bytes == 0 and again.cells_replayed == 0
    fig.checkout(5)
    fig.checkout(3)
    assert deep_equal(fig.state, first)


def test_split_on_checkout():
    s = Session()
    s.run("a = list(1)\nb = record{x: a}")  # {a,b}
    s.run("b.x = 0")  # split into {a}, {b}
    s.run("a = 7")
    s.checkout(1)
    assert {c.members for c in s.detector.partition} == {("a", "b")}
    s.checkout(3)
    assert {c.members for c in s.detector.partition} == {("a",), ("b",)}
    assert deep_equal(s.state, replay_from_scratch(s.graph, 3))


def test_plan_replays_are_minimal_under_random_poisoning():
    rng = random.Random(4)
    checked = 0
    for seed in range(25):
        r = generate_trace(seed, FuzzOptions(n_cells=9, max_names=5, checkout_rate=0.3, allow_opaque=True,
                                             check_cells=False, check_checkouts=False))
        s = r.session
        blobs = [e for t, n in s.graph.nodes.items() for e in n.delta if e.blob is not None]
        for e in rng.sample(blobs, min(len(blobs), 3)):
            s.store.poison(e.blob)
        for target in s.graph.nodes:
            d = s.graph.diff(s.head, target)
            try:
                plan = s.plan(target)
            except RestoreFailed:
                assert min_replays_exhaustive(s.graph, d.to_load, lambda v: v.blob is not None and s.store.check(v.blob)) is None
                continue
            best = min_replays_exhaustive(s.graph, d.to_load, lambda v: v.blob is not None and s.store.check(v.blob))
            assert len(plan.replays) == best
            assert {v for v in plan.loads} <= {v for v in d.to_load} | {
                s.graph.vcv(c, rt) for t in plan.replays for c, rt in s.graph.node(t).reads}
            checked += 1
    assert checked > 100


def test_random_checkouts_are_exact():
    for seed in range(10):
        r = generate_trace(seed, FuzzOptions(n_cells=30, max_names=10, checkout_rate=0.3))
        assert not r.problems, r.problems
        assert r.counters["checkouts"] > 0

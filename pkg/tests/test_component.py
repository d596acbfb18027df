from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronostate.cellscript import execute, parse
from chronostate.component import Component, encode, extract, materialize
from chronostate.errors import CorruptBlob
from chronostate.fuzz import CellGenerator
from chronostate.heap import Kind, State, deep_equal

primitive = st.one_of(
    st.integers(-(2**70), 2**70),
    st.floats(allow_nan=True),
    st.booleans(),
    st.text(max_size=8),
    st.none(),
)
values = st.recursive(
    primitive,
    lambda kids: st.one_of(
        st.lists(kids, max_size=4),
        st.dictionaries(st.text(max_size=4), kids, max_size=3),
    ),
    max_leaves=20,
)


def build(state: State, v) -> int:
    if isinstance(v, bool):
        return state.alloc(Kind.BOOL, v)
    if isinstance(v, int):
        return state.alloc(Kind.INT, v)
    if isinstance(v, float):
        return state.alloc(Kind.FLOAT, v)
    if isinstance(v, str):
        return state.alloc(Kind.STR, v)
    if v is None:
        return state.alloc(Kind.NONE)
    if isinstance(v, list):
        return state.alloc(Kind.LIST, children=[build(state, x) for x in v])
    return state.alloc(Kind.MAP, children={k: build(state, x) for k, x in v.items()})


@settings(max_examples=150, deadline=None)
@given(st.lists(values, min_size=1, max_size=4), st.data())
def test_round_trip_preserves_sharing(vals, data):
    s = State()
    ids = [build(s, v) for v in vals]
    # bind several names, some aliasing the same object
    for i in range(len(ids) + 2):
        s.bind(f"n{i}", ids[data.draw(st.integers(0, len(ids) - 1))])
    names = sorted(s.bindings)
    comp = extract(s, names)
    again = Component.from_bytes(comp.to_bytes())
    assert again.to_bytes() == comp.to_bytes()  # tuple equality trips on NaN
    fresh = State()
    fresh.new_int(0)
    materialize(fresh, again)
    assert deep_equal(s, fresh)


def test_generated_states_round_trip():
    rng = random.Random(11)
    gen = CellGenerator(rng, allow_opaque=False)
    s = State()
    for _ in range(1000):
        execute(parse(gen.cell(s)), s, rng)
        s.collect()
        if not s.bindings:
            continue
        comp = encode(s, s.bindings)
        out = State()
        materialize(out, Component.from_bytes(comp.to_bytes()))
        assert deep_equal(s, out)


def test_cycle_round_trip():
    s = State()
    execute(parse("a = record{f: 1}\na.self = a\nb = list(a)\nappend(b, b)"), s)
    comp = extract(s, ["a", "b"])
    out = State()
    materialize(out, Component.from_bytes(comp.to_bytes()))
    assert deep_equal(s, out)


def test_opaque_and_misbehaving_are_unserializable():
    s = State()
    execute(parse('g = opaque("gen")\nm = map{"k": 1.5}'), s)
    assert not encode(s, ["g"])
    assert "gen" in encode(s, ["g"]).reason
    assert encode(s, ["m"])
    assert not encode(s, ["m"], misbehaving=("float",))
    assert "gen" in encode(s, ["g"], misbehaving=("gen",)).reason
    with pytest.raises(ValueError):
        extract(s, ["g"]).to_bytes()


@pytest.mark.parametrize("cut", [0, 1, 5, 9])
def test_truncated_payload_is_corrupt(cut):
    s = State()
    execute(parse('a = list("x", 1, 2.5)'), s)
    data = extract(s, ["a"]).to_bytes()
    with pytest.raises(CorruptBlob):
        Component.from_bytes(data[:cut])


def test_bad_version_and_trailing_bytes():
    s = State()
    execute(parse("a = 1"), s)
    data = extract(s, ["a"]).to_bytes()
    with pytest.raises(CorruptBlob):
        Component.from_bytes(b"\x7f" + data[1:])
    with pytest.raises(CorruptBlob):
        Component.from_bytes(data + b"\x00")


def test_encoding_is_canonical():
    a, b = State(), State()
    b.new_str("pad")
    execute(parse('x = record{z: 1, a: list("q")}\ny = x.a'), a)
    execute(parse('x = record{a: list("q"), z: 1}\ny = x.a'), b)
    assert extract(a, ["x", "y"]).to_bytes() == extract(b, ["y", "x"]).to_bytes()


def test_shared_object_encoded_once():
    s = State()
    execute(parse('b = list(1)\nser = record{v: b}\nobj = list(b)'), s)
    comp = extract(s, ["b", "obj", "ser"])
    assert len(comp.nodes) == 4  # b, its element, ser, obj
    out = State()
    bound = materialize(out, Component.from_bytes(comp.to_bytes()))
    assert out.objects[bound["ser"]].children["v"] == out.objects[bound["obj"]].children[0] == bound["b"]

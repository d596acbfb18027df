"""Random CellScript cells shaped by the live state.

The generator looks at what is bound (and what those objects contain) so
most cells are valid and exercise aliasing, in-place mutation, splits,
merges, cycles, deletion and control flow; a small share are deliberately
broken to cover the error-mid-cell path.
"""

from __future__ import annotations

import random

from ..cellscript.printer import quote
from ..heap import Kind, State

FIELDS = ("f0", "f1", "f2")
KEYS = ("k0", "k1", "k2")
TAGS = ("gen", "hash", "conn")


class CellGenerator:
    def __init__(
        self,
        rng: random.Random,
        max_names: int = 12,
        allow_opaque: bool = True,
        allow_nondet: bool = False,
        error_rate: float = 0.03,
        max_statements: int = 3,
        max_len: int = 12,
    ):
        self.rng = rng
        self.pool = [f"v{i}" for i in range(max_names)]
        self.allow_opaque = allow_opaque
        self.allow_nondet = allow_nondet
        self.error_rate = error_rate
        self.max_statements = max_statements
        self.max_len = max_len

    # state inspection -------------------------------------------------

    def _paths(self, state: State, depth: int = 2) -> list[tuple[str, object]]:
        """(expression text, object) for names and a few nested members."""
        out = []
        for name in sorted(state.bindings):
            frontier = [(name, state.objects[state.bindings[name]])]
            out.append(frontier[0])
            for _ in range(depth):
                nxt = []
                for text, o in frontier:
                    if o.kind is Kind.LIST:
                        for i in range(min(len(o.children), 3)):
                            nxt.append((f"{text}[{i}]", state.objects[o.children[i]]))
                    elif o.kind is Kind.RECORD:
                        for f in sorted(o.children)[:3]:
                            nxt.append((f"{text}.{f}", state.objects[o.children[f]]))
                    elif o.kind is Kind.MAP:
                        for k in sorted(o.children)[:3]:
                            nxt.append((f"{text}[{quote(k)}]", state.objects[o.children[k]]))
                out.extend(nxt)
                frontier = nxt
        return out

    # pieces -----------------------------------------------------------

    def literal(self) -> str:
        r = self.rng
        c = r.random()
        if c < 0.45:
            return str(r.randint(0, 99))
        if c < 0.7:
            return quote(r.choice(["a", "b", "c", "xy", ""]))
        if c < 0.8:
            return r.choice(["true", "false"])
        if c < 0.9:
            return "none"
        return f"{r.randint(0, 9)}.{r.randint(0, 99)}"

    def value(self, paths, depth: int = 2) -> str:
        r = self.rng
        c = r.random()
        if c < 0.3 or depth <= 0:
            return self.literal()
        if c < 0.55 and paths:
            return r.choice(paths)[0]
        if c < 0.68:
            n = r.randint(0, 3)
            return "list(" + ", ".join(self.value(paths, depth - 1) for _ in range(n)) + ")"
        if c < 0.8:
            fs = r.sample(FIELDS, r.randint(1, 2))
            return "record{" + ", ".join(f"{f}: {self.value(paths, depth - 1)}" for f in fs) + "}"
        if c < 0.87:
            ks = r.sample(KEYS, r.randint(0, 2))
            return "map{" + ", ".join(f"{quote(k)}: {self.value(paths, depth - 1)}" for k in ks) + "}"
        if c < 0.92:
            return f"range_list({r.randint(0, 4)})"
        if c < 0.96 and self.allow_opaque:
            return f'opaque("{r.choice(TAGS)}")'
        nums = [p for p, o in paths if o.kind in (Kind.INT, Kind.FLOAT)]
        if nums:
            return f"{r.choice(nums)} {r.choice(['+', '-', '*'])} {r.randint(1, 5)}"
        return self.literal()

    def statement(self, state: State, paths, depth: int = 1) -> str:
        r = self.rng
        bound = sorted(state.bindings)
        containers = [(p, o) for p, o in paths if o.kind in (Kind.LIST, Kind.RECORD, Kind.MAP)]
        lists = [(p, o) for p, o in containers if o.kind is Kind.LIST]
        records = [(p, o) for p, o in containers if o.kind is Kind.RECORD]
        maps = [(p, o) for p, o in containers if o.kind is Kind.MAP]
        broken = r.random() < self.error_rate
        c = r.random()

        if broken:
            return r.choice([
                f"{r.choice(self.pool)}.zz = 1",
                f"x_unbound_{r.randint(0, 3)}",
                f"{r.choice(bound) if bound else 'v0'}[99]",
                f"del {r.choice(self.pool)}",
                "q = 1 / 0",
            ])
        if c < 0.22 or not bound:
            return f"{r.choice(self.pool)} = {self.value(paths)}"
        if c < 0.32:
            return f"{r.choice(self.pool)} = {r.choice(paths)[0]}"
        if c < 0.42 and records:
            p, _ = r.choice(records)
            return f"{p}.{r.choice(FIELDS)} = {self.value(paths, 1)}"
        if c < 0.5 and lists:
            p, o = r.choice(lists)
            if o.children:
                return f"{p}[{r.randrange(len(o.children))}] = {self.value(paths, 1)}"
            return f"append({p}, {self.value(paths, 1)})"
        if c < 0.58 and lists:
            p, o = r.choice(lists)
            if len(o.children) >= self.max_len:
                return f"{p}[0] = {self.literal()}"
            return f"append({p}, {self.value(paths, 1)})"
        if c < 0.64 and maps:
            p, _ = r.choice(maps)
            return f"{p}[{quote(r.choice(KEYS))}] = {self.value(paths, 1)}"
        if c < 0.68 and (maps or records):
            p, o = r.choice(maps + records)
            if o.children:
                return f"remove_key({p}, {quote(r.choice(sorted(o.children)))})"
            return p
        if c < 0.74:
            return f"del {r.choice(bound)}"
        if c < 0.8:
            p = r.choice(paths)[0]
            return r.choice([p, f"len({p})" if r.random() < 0.5 else p])
        if c < 0.86 and depth > 0:
            a = r.choice(paths)[0]
            cond = r.choice([f"{a} == {self.literal()}", f"len(list({a})) > 0", "true", "false",
                             f"{r.choice(bound)} == {r.choice(bound)}"])
            body = self.statement(state, paths, depth - 1)
            if r.random() < 0.6:
                return f"if {cond} {{\n{body}\n}} else {{\n{self.statement(state, paths, depth - 1)}\n}}"
            return f"if {cond} {{\n{body}\n}}"
        if c < 0.9 and depth > 0:
            k = r.randint(0, 3)
            if lists and r.random() < 0.6:
                p, o = r.choice(lists)
                if len(o.children) + k <= self.max_len:
                    return f"for i in 0..{k} {{\n append({p}, i)\n}}"
            return f"for i in 0..{k} {{\n{self.statement(state, paths, depth - 1)}\n}}"
        if c < 0.93 and (records or lists):
            # build a cycle
            p, o = r.choice(records + lists)
            if o.kind is Kind.RECORD:
                return f"{p}.{r.choice(FIELDS)} = {r.choice(paths)[0]}"
            if len(o.children) < self.max_len:
                return f"append({p}, {p})"
            return p
        if c < 0.96 and self.allow_nondet:
            return r.choice([f"{r.choice(self.pool)} = rand()", f'{r.choice(self.pool)} = opaque_nondet("rng")'])
        return f"{r.choice(self.pool)} = {self.value(paths)}"

    def cell(self, state: State) -> str:
        paths = self._paths(state)
        n = self.rng.randint(1, self.max_statements)
        return "\n".join(self.statement(state, paths) for _ in range(n))

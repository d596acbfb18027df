from __future__ import annotations

import pytest

from chronostate.bench import BUILTIN, linear_fit, parse_workload, run_workload
from chronostate.errors import SpecError


def test_parse_templates_and_directives():
    wl = parse_workload("name = w\nseed = 3\n\n%% cell\na = 1\n%% cell *3\nx{i%2} = {i}\n%% undo\n%% checkout t1\n")
    assert wl.name == "w" and wl.seed == 3 and wl.n_cells == 4
    assert [op.source for op in wl.ops[1:4]] == ["x0 = 0", "x1 = 1", "x0 = 2"]
    assert [op.kind for op in wl.ops[4:]] == ["undo", "checkout"]


@pytest.mark.parametrize(
    "text",
    ["", "nokey\n%% cell\na = 1", "colour = red\n%% cell\na=1", "%% cell *x\na = 1", "%% jump\n",
     "%% checkout\n", "%% undo\nx = 1\n", "systems = magic\n%% cell\na=1", "%% cell\n\n"],
)
def test_bad_specs(text):
    with pytest.raises(SpecError):
        parse_workload(text)


def test_single_cell_incremental_equals_full_dump():
    r = run_workload(parse_workload("%% cell\na = list(1, 2)\nb = record{x: \"y\"}\n"))
    inc, full = r.summary["incremental"], r.summary["full-dump"]
    # same bytes up to per-blob framing
    assert abs(inc["cumulative_bytes"] - full["cumulative_bytes"]) < 32


def test_small_touch_workload_shape():
    r = run_workload(parse_workload(BUILTIN["touch-1-of-20"](n_lists=4, n_items=50, item_len=100, n_cells=8)),
                     ("incremental", "full-dump", "check-all"))
    inc, full, chk = (r.summary[k] for k in ("incremental", "full-dump", "check-all"))
    assert inc["cumulative_bytes"] < full["cumulative_bytes"] / 2
    assert inc["loaded_bytes"] < full["loaded_bytes"] / 3
    assert inc["vargraph_rebuilds"] < chk["vargraph_rebuilds"]
    header = r.csv().splitlines()[0].split(",")
    assert {"checkpoint_bytes", "loaded_bytes", "vargraph_rebuilds", "detect_ms", "write_ms"} <= set(header)


def test_linear_fit():
    slope, icept, r2 = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert (round(slope, 9), round(icept, 9), r2) == (2, 1, 1.0)
    assert linear_fit([1, 2, 3], [1, 3, 2])[2] < 0.5

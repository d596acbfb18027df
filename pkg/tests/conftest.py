from __future__ import annotations

import sys

import pytest

from chronostate import Session

FIG_CELLS = (
    "df = list(1, 2, 3)\ngmm = record{k: 0, w: none}",
    "gmm.k = len(df)",
    "plot = record{model: gmm.k + 1}",
)
BRANCH_CELLS = ("x = 5", "x = x + 1")


def run_fig(session: Session) -> Session:
    """t1 -> t2 -> t3, check out t1, then t4 -> t5 on a new branch."""
    for src in FIG_CELLS:
        session.run(src)
    session.checkout(1)
    for src in BRANCH_CELLS:
        session.run(src)
    return session


@pytest.fixture
def fig() -> Session:
    return run_fig(Session())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.summary_line(n))

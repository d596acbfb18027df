"""Random workload generation and oracle-equivalence checking."""

from .generator import CellGenerator
from .harness import FuzzOptions, FuzzReport, TraceRunner, Violation, check_cell, fuzz, generate_trace, script_text

__all__ = [
    "CellGenerator",
    "FuzzOptions",
    "FuzzReport",
    "TraceRunner",
    "Violation",
    "check_cell",
    "fuzz",
    "generate_trace",
    "script_text",
]

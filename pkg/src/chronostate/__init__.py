"""Time-travel versioning for mutable, aliased session states.

Cells written in CellScript run against a namespace of aliased objects.
After each cell the changed Co-variables (maximal groups of names sharing
objects) are detected and stored as an incremental checkpoint; any
checkpoint can be checked out again, loading only what diverged and
recomputing whatever cannot be loaded.
"""

from .cellscript import AccessLog, CellProgram, execute, parse, replay_in_sandbox, to_source
from .checkout import CheckoutEngine, CheckoutPlan, CheckoutReport
from .component import Component, Unserializable, encode, extract, materialize
from .detector import CoVariable, Detector, StateDelta, VarGraph, build_vargraph, candidates, detect_delta, hash_fastpath, partition
from .errors import *  # noqa: F403
from .graph import ROOT, CheckpointGraph, CheckpointNode, StateDiff, VersionedCoVariable
from .heap import HeapObject, Kind, State, deep_equal, delete_binding, reachable
from .session import CellResult, Config, Session

__version__ = "0.1.0"

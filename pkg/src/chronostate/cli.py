"""Git-style command line: ``chrono init|run|repl|log|status|checkout|bench|fuzz``.

Every command is a thin wrapper over :class:`chronostate.session.Session`
and friends. Exit codes: 0 success, 1 fuzz violation, 2 user error,
3 restore failure, 4 corruption.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import os
import re
import sys
from pathlib import Path

from .bench import BUILTIN, SYSTEMS, load_workload, parse_workload, run_workload
from .errors import (
    CellSyntaxError,
    ChronoError,
    CorruptBlob,
    CorruptJournal,
    RestoreFailed,
    StorageError,
)
from .graph import ROOT
from .session import Config, Session

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USER = 2
EXIT_RESTORE = 3
EXIT_CORRUPT = 4

DEFAULT_SESSION = ".chrono"
LOCK_FILE = "lock"
_SEPARATOR = re.compile(r"^#\s*%%.*$", re.MULTILINE)


class UserError(Exception):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RestoreFailed):
        return EXIT_RESTORE
    if isinstance(exc, (CorruptJournal, CorruptBlob)):
        return EXIT_CORRUPT
    if isinstance(exc, StorageError):
        return EXIT_CORRUPT
    return EXIT_USER


def session_path(args) -> Path:
    p = getattr(args, "session", None) or os.environ.get("CHRONO_SESSION") or DEFAULT_SESSION
    return Path(p)


@contextlib.contextmanager
def locked(path: Path, exclusive: bool):
    """Advisory lock: one writer per session; readers share."""
    fd = os.open(path / LOCK_FILE, os.O_RDWR | os.O_CREAT, 0o644)
    try:
        try:
            fcntl.flock(fd, (fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH) | fcntl.LOCK_NB)
        except BlockingIOError:
            raise UserError(f"session {path} is in use by another process") from None
        yield
    finally:
        os.close(fd)


def open_session(args, exclusive: bool = True):
    path = session_path(args)
    if not Session.is_session_dir(path):
        raise UserError(f"{path} is not a session directory (run 'chrono init' first)")
    return path, exclusive


def split_cells(text: str) -> list[str]:
    """Split a script on ``# %%`` separator lines; blank cells are dropped."""
    return [c.strip("\n") for c in _SEPARATOR.split(text) if c.strip()]


def _print_result(res, stats: bool, out) -> None:
    if res.output is not None:
        print(res.output, file=out)
    if res.error is not None:
        print(f"error: {res.error}", file=sys.stderr)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(res.summary(), file=out)
    if stats:
        t = res.timings
        print(
            f"  detect {t['detect_ms']:.3f} ms, write {t['write_ms']:.3f} ms, "
            f"checkpoint {t['checkpoint_ms']:.3f} ms, execute {t['execute_ms']:.3f} ms",
            file=out,
        )


# commands --------------------------------------------------------------------


def cmd_init(args) -> int:
    path = Path(args.path) if args.path else session_path(args)
    if path.exists() and not Session.is_session_dir(path):
        if not path.is_dir() or any(path.iterdir()):
            raise UserError(f"{path} exists and is not a session directory")
    fresh = not Session.is_session_dir(path)
    cfg = None
    if fresh:
        cfg = Config(
            snapshots=not args.no_snapshots,
            check_all=args.check_all,
            hash_fastpath=args.hash_fastpath,
            seed=args.seed,
            misbehaving=tuple(m for m in (args.misbehaving or "").split(",") if m),
            self_heal=args.self_heal,
            fsync=not args.no_fsync,
        )
    path.mkdir(parents=True, exist_ok=True)
    with locked(path, exclusive=True):
        s = Session(path, cfg)
    if fresh:
        print(f"initialized empty session in {path}")
    else:
        print(f"reopened session in {path}: {len(s.graph) - 1} checkpoint(s), head at {s.graph.label(s.head)}")
    return EXIT_OK


def cmd_run(args) -> int:
    path, _ = open_session(args)
    if args.expr is not None:
        cells = [args.expr]
    elif args.file:
        text = sys.stdin.read() if args.file == "-" else _read(args.file)
        cells = split_cells(text)
    else:
        raise UserError("run needs -e SOURCE or a FILE")
    code = EXIT_OK
    with locked(path, exclusive=True):
        s = Session(path)
        try:
            for src in cells:
                res = s.run(src)
                _print_result(res, args.stats, sys.stdout)
                if res.error is not None:
                    code = EXIT_USER
        finally:
            s.persist_stats()
        if args.stats and s.cell_count:
            n = s.cell_count
            print(
                f"{n} cell(s): mean detect {s.timings['detect_ms'] / n:.3f} ms, "
                f"mean write {s.timings['write_ms'] / n:.3f} ms, "
                f"mean checkpoint {s.timings['checkpoint_ms'] / n:.3f} ms"
            )
    return code


def _read(file: str) -> str:
    try:
        return Path(file).read_text()
    except OSError as exc:
        raise UserError(f"cannot read {file}: {exc}") from None


REPL_HELP = """\
Enter CellScript; a blank line runs the cell.
  :log             show the checkpoint graph
  :status          head, names and counters
  :checkout ID     check out a checkpoint (t5, ROOT, HEAD~1)
  :undo            check out the parent of the head
  :quit            leave"""


def cmd_repl(args) -> int:
    path, _ = open_session(args)
    interactive = sys.stdin.isatty()
    with locked(path, exclusive=True):
        s = Session(path)
        buf: list[str] = []
        try:
            while True:
                if interactive:
                    print("... " if buf else f"[{s.graph.label(s.head)}]> ", end="", flush=True)
                line = sys.stdin.readline()
                eof = line == ""
                line = line.rstrip("\n")
                if not buf and line.startswith(":"):
                    if _repl_command(s, line) == "quit":
                        break
                    continue
                if line.strip() and not eof:
                    buf.append(line)
                    continue
                if buf:
                    src = "\n".join(buf)
                    buf = []
                    try:
                        _print_result(s.run(src), args.stats, sys.stdout)
                    except CellSyntaxError as exc:
                        print(f"syntax error: {exc}", file=sys.stderr)
                if eof:
                    break
        finally:
            s.persist_stats()
    return EXIT_OK


def _repl_command(s: Session, line: str) -> str | None:
    parts = line[1:].split()
    cmd = parts[0] if parts else ""
    try:
        if cmd in ("q", "quit", "exit"):
            return "quit"
        if cmd == "help":
            print(REPL_HELP)
        elif cmd == "log":
            print("\n".join(s.graph.log_lines()))
        elif cmd == "status":
            _print_status(s, stats=True)
        elif cmd == "checkout" and len(parts) == 2:
            _print_checkout(s, s.checkout(parts[1]), as_json=False)
        elif cmd == "undo":
            _print_checkout(s, s.undo(), as_json=False)
        else:
            print(f"unknown command {line!r}; try :help", file=sys.stderr)
    except ChronoError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return None


def cmd_log(args) -> int:
    path, _ = open_session(args)
    with locked(path, exclusive=False):
        s = Session(path)
        if args.dot:
            print(s.graph.export_dot(), end="")
        else:
            print("\n".join(s.graph.log_lines()))
    return EXIT_OK


def cmd_export_dot(args) -> int:
    args.dot = True
    return cmd_log(args)


def _print_status(s: Session, stats: bool, as_json: bool = False) -> None:
    names = s.names()
    covars = sorted(s.graph.session_state(s.head))
    if as_json:
        payload = {"head": s.head, "names": names, "covariables": [list(c) for c in covars]}
        if stats:
            payload["stats"] = s.load_stats()
        print(json.dumps(payload, indent=1))
        return
    print(f"head: {s.graph.label(s.head)}")
    print(f"names: {', '.join(names) if names else '(none)'}")
    print(f"co-variables: {len(covars)}")
    for c in covars:
        print(f"  {{{', '.join(c)}}} @ t{s.graph.session_state(s.head)[c]}")
    if stats:
        for k, v in sorted(s.load_stats().items()):
            print(f"  {k}: {v}")


def cmd_status(args) -> int:
    path, _ = open_session(args)
    with locked(path, exclusive=False):
        s = Session(path)
        _print_status(s, args.stats, args.json)
    return EXIT_OK


def _print_checkout(s: Session, rep, as_json: bool) -> None:
    if as_json:
        print(json.dumps(rep.as_dict(), indent=1))
    elif rep.noop and rep.previous == rep.target:
        print(f"already at {s.graph.label(rep.target)}")
    else:
        print(
            f"checked out {s.graph.label(rep.target)} from {s.graph.label(rep.previous)}: "
            f"{rep.covariables_loaded} co-variable(s) restored ({rep.blobs_loaded} blob(s), "
            f"{rep.loaded_bytes} bytes, {rep.cells_replayed} cell(s) replayed), "
            f"{rep.identical} identical, {rep.duration_ms:.1f} ms"
        )


def cmd_checkout(args) -> int:
    path, _ = open_session(args)
    with locked(path, exclusive=True):
        s = Session(path)
        target = s.resolve(args.id)
        if target == s.head:
            # nothing to restore; report without rebuilding the state
            from .checkout import CheckoutReport

            rep = CheckoutReport(target=target, previous=target, noop=True)
        else:
            rep = s.checkout(target)
        _print_checkout(s, rep, args.json)
    return EXIT_OK


def cmd_undo(args) -> int:
    args.id = "HEAD~1"
    return cmd_checkout(args)


def cmd_bench(args) -> int:
    if args.spec.startswith("builtin:"):
        name = args.spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise UserError(f"unknown built-in workload {name!r}; choose from {', '.join(BUILTIN)}")
        wl = parse_workload(BUILTIN[name]())
    else:
        wl = load_workload(args.spec)
    systems = tuple(args.systems.split(",")) if args.systems else None
    if systems and any(x not in SYSTEMS for x in systems):
        raise UserError(f"--systems must be drawn from {', '.join(SYSTEMS)}")
    result = run_workload(wl, systems)
    text = result.csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    for line in result.summary_lines():
        print(line, file=sys.stderr)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    from .fuzz import FuzzOptions, fuzz, script_text

    opts = FuzzOptions(
        n_cells=args.cells,
        max_names=args.names,
        poison_rate=args.poison,
        allow_nondet=args.nondet,
    )

    def progress(i, report):
        if args.verbose and (i + 1) % 100 == 0:
            print(f"{i + 1} traces", file=sys.stderr)

    report = fuzz(args.seed, args.n, opts, progress=progress)
    c = report.counters
    print(
        f"{c['traces']} trace(s), {c['cells']} cell(s), {c['checkouts']} checkout(s), "
        f"{c['restore_failed']} clean restore failure(s); "
        f"false-positive rate {report.false_positive_rate():.4f}, "
        f"false-diverged rate {report.false_diverged_rate():.4f}"
    )
    if report.ok:
        print("PASS")
        return EXIT_OK
    first = report.violations[0]
    print(f"FAIL: {first}")
    print("minimized repro:")
    print(script_text(first.script), end="")
    return EXIT_VIOLATION


# wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chrono", description="Time-travel versioning for CellScript sessions.")
    p.add_argument("--session", help="session directory (default: $CHRONO_SESSION or ./.chrono)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init", help="create or reopen a session")
    sp.add_argument("path", nargs="?")
    sp.add_argument("--no-snapshots", action="store_true", help="fold deltas instead of storing per-node snapshots")
    sp.add_argument("--check-all", action="store_true", help="ablation: re-check every co-variable after each cell")
    sp.add_argument("--hash-fastpath", action="store_true", help="hash flat lists instead of comparing VarGraphs")
    sp.add_argument("--seed", type=int, default=0, help="seed for rand()")
    sp.add_argument("--misbehaving", help="comma-separated kinds whose serialization is refused")
    sp.add_argument("--self-heal", action="store_true", help="rewrite corrupt blobs after recomputing them")
    sp.add_argument("--no-fsync", action="store_true")
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("run", help="run cells and commit a checkpoint per cell")
    sp.add_argument("-e", dest="expr", metavar="SRC", help="cell source")
    sp.add_argument("file", nargs="?", help="script with '# %%%%' cell separators ('-' for stdin)")
    sp.add_argument("--stats", action="store_true", help="print per-cell timings")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("repl", help="interactive cells separated by blank lines")
    sp.add_argument("--stats", action="store_true")
    sp.set_defaults(func=cmd_repl)

    sp = sub.add_parser("log", help="show the checkpoint graph")
    sp.add_argument("--dot", action="store_true", help="Graphviz output")
    sp.set_defaults(func=cmd_log)

    sp = sub.add_parser("export-dot", help="same as 'log --dot'")
    sp.set_defaults(func=cmd_export_dot)

    sp = sub.add_parser("status", help="head, names, co-variables")
    sp.add_argument("--stats", action="store_true")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_status)

    sp = sub.add_parser("checkout", help="restore a checkpoint")
    sp.add_argument("id", help="t5, 5, ROOT, HEAD, HEAD~n")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_checkout)

    sp = sub.add_parser("undo", help="check out the parent of the head")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_undo)

    sp = sub.add_parser("bench", help="run a workload spec and print CSV metrics")
    sp.add_argument("spec", help=f"workload file, or builtin:NAME ({', '.join(BUILTIN)})")
    sp.add_argument("--systems", help=f"comma-separated subset of {', '.join(SYSTEMS)}")
    sp.add_argument("--out", help="write CSV here instead of stdout")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("fuzz", help="oracle-equivalence fuzzing")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--n", type=int, default=100, help="number of traces")
    sp.add_argument("--cells", type=int, default=30, help="cells per trace")
    sp.add_argument("--names", type=int, default=40, help="name pool size")
    sp.add_argument("--poison", type=float, default=0.3, help="chance of poisoning blobs before a checkout")
    sp.add_argument("--nondet", action="store_true", help="include nondeterministic cells")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_fuzz)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"chrono: {exc}", file=sys.stderr)
        return EXIT_USER
    except CellSyntaxError as exc:
        print(f"chrono: syntax error: {exc}", file=sys.stderr)
        return EXIT_USER
    except ChronoError as exc:
        code = exit_code_for(exc)
        label = {EXIT_RESTORE: "restore failed", EXIT_CORRUPT: "corruption"}.get(code, "error")
        print(f"chrono: {label}: {exc}", file=sys.stderr)
        return code
    except KeyError as exc:  # UnknownKey and friends subclass KeyError too
        print(f"chrono: error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())

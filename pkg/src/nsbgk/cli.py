"""Command-line entry point: ``nsbgk {run,iterate,diagnose,decay,check}``.

Exit status 0 on success, 1 on validation errors (bad flags, config or
files), 2 on runtime aborts.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import SimConfig
from .errors import SimulationAbort, SolverError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsbgk", description="Navier-Stokes-BGK solver and verification harness")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="time-march the coupled system")
    run.add_argument("--config")
    run.add_argument("--out", required=True)
    run.add_argument("--snapshot-every", type=int)
    run.add_argument("--resume", metavar="SNAPSHOT_DIR")

    it = sub.add_parser("iterate", help="Picard iteration over [0, horizon]")
    it.add_argument("--config")
    it.add_argument("--out", required=True)
    it.add_argument("--horizon", type=float)
    it.add_argument("--max-iters", type=int)
    it.add_argument("--tol", type=float)

    dg = sub.add_parser("diagnose", help="recompute diagnostics from a snapshot")
    dg.add_argument("snapshot")
    dg.add_argument("--out", help="CSV file for the diagnostics row (default: stdout)")

    dc = sub.add_parser("decay", help="long-horizon modulated-energy study")
    dc.add_argument("--config")
    dc.add_argument("--out", required=True)
    dc.add_argument("--t-final", type=float)

    ck = sub.add_parser("check", help="built-in invariant suite on random data")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--count", type=int, default=20)
    return p


def _config(path) -> SimConfig:
    from .io import parse_config
    return parse_config(path) if path else SimConfig()


def _cmd_run(args) -> int:
    from .domain import grid_from_config
    from .io import DiagnosticsWriter, read_snapshot
    from .stepper import SystemState, run_simulation

    cfg = _config(args.config)
    init = None
    grid = grid_from_config(cfg)
    if args.resume:
        snap = read_snapshot(args.resume)
        if snap.grid != grid:
            raise ValidationError(f"{args.resume}: snapshot grid {snap.grid.spec()} does not "
                                  f"match the config grid {grid.spec()}")
        s = snap.state
        init = SystemState.build(s.f, s.rho, s.u, cfg.gamma, s.t, grid, cfg)
    os.makedirs(args.out, exist_ok=True)
    with DiagnosticsWriter(os.path.join(args.out, "diagnostics.csv"), grid.dim) as w:
        res = run_simulation(cfg, init, grid, out_dir=args.out, on_row=w.write,
                             snapshot_every=args.snapshot_every)
    print(f"completed {res.steps} steps to t = {res.state.t:.6g}; "
          f"{len(res.snapshots)} snapshot(s) in {args.out}")
    return EXIT_OK


def _cmd_iterate(args) -> int:
    from .io import write_iteration_trace
    from .stepper import picard_solve

    cfg = _config(args.config)
    res = picard_solve(cfg, T=args.horizon, n_max=args.max_iters, tol=args.tol)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "iteration_trace.csv")
    write_iteration_trace(res.trace, path)
    tr = res.trace
    print(f"{tr.iterations} iterate(s), sup E = {tr.sup_E[-1]:.3e}, "
          f"converged = {tr.converged}; trace in {path}")
    for m in tr.messages:
        print(f"note: {m}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    from .diagnostics import compute_row, row_columns
    from .domain import FluidState, KineticState, validate_state
    from .io import read_snapshot

    snap = read_snapshot(args.snapshot)
    cfg = snap.config or SimConfig()
    st = snap.state
    report = validate_state(KineticState(st.f, st.t),
                            FluidState(st.rho, st.h, st.u, st.gamma, st.t), snap.grid, cfg)
    row = compute_row(st, snap.grid, cfg)
    lines = [",".join(row_columns(snap.grid.dim)), ",".join(row.format(snap.grid.dim))]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


def _cmd_decay(args) -> int:
    from .diagnostics import decay_fit
    from .domain import grid_from_config
    from .io import DiagnosticsWriter
    from .stepper import run_simulation

    cfg = _config(args.config)
    if args.t_final is not None:
        cfg = cfg.replace(t_final=args.t_final)
    grid = grid_from_config(cfg)
    os.makedirs(args.out, exist_ok=True)
    with DiagnosticsWriter(os.path.join(args.out, "diagnostics.csv"), grid.dim) as w:
        res = run_simulation(cfg, None, grid, on_row=w.write, snapshot_every=0)
    t = np.array([r.values["t"] for r in res.rows])
    L = np.array([r.values["L"] for r in res.rows])
    fit = decay_fit(t, L)
    out = {"amplitude": fit.amplitude, "rate": fit.rate, "residual": fit.residual,
           "n_used": fit.n_used, "n_excluded": fit.n_excluded,
           "L_initial": float(L[0]), "L_final": float(L[-1]),
           "decrease_factor": float(L[0] / L[-1]) if L[-1] > 0 else None,
           "monitor_levels": sorted({r.values["monitor"] for r in res.rows})}
    with open(os.path.join(args.out, "decay_fit.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"rate = {fit.rate:.6g}, amplitude = {fit.amplitude:.6g}, "
          f"residual = {fit.residual:.3g}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .selfcheck import run_checks

    results = run_checks(seed=args.seed, count=args.count)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ABORT


COMMANDS = {"run": _cmd_run, "iterate": _cmd_iterate, "diagnose": _cmd_diagnose,
            "decay": _cmd_decay, "check": _cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationAbort as exc:
        where = f"; state dumped to {exc.dump_dir}" if exc.dump_dir else ""
        print(f"aborted: {exc}{where}", file=sys.stderr)
        return EXIT_ABORT
    except SolverError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())

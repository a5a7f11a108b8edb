"""Command-line front end.

Exit codes: 0 success, 2 domain or validation error, 3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path as FsPath

import numpy as np

from . import ancilla, filter as flt, master, oracle, smoother
from .exceptions import InvalidRecord, InvalidState, JumpSmoothError, SigmaOnEvent
from .integrate import TimeGrid
from .model import LevelSystem, damping_operator, load_system
from .records import RecordParseError, read_record, write_record
from .serialize import fmt, json_text, matrix_fields, matrix_header, write_csv

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 2, 3

def _initial_state(sys: LevelSystem, args) -> np.ndarray:
    if getattr(args, "populations", None):
        try:
            p = np.array([float(x) for x in args.populations.split(",")])
        except ValueError:
            raise InvalidState(f"--populations {args.populations!r} is not a list of numbers") from None
        if p.shape != (sys.dim,):
            raise InvalidState(f"--populations needs {sys.dim} comma-separated values")
        return np.diag(p).astype(complex)
    level = sys.dim - 1 if args.level is None else args.level
    return sys.projector(level)


def _threads() -> int:
    raw = os.environ.get("JS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="\n"), True


def cmd_validate(args) -> int:
    sysm = load_system(args.config)
    damping_operator(sysm)
    omegas = " ".join(f"omega{ch}={w!r}" for ch, w in sysm.bohr_frequencies.items())
    rates = " ".join(f"Gamma_{r}={float(g)!r}" for r, g in enumerate(sysm.total_rates))
    print(_tidy(omegas))
    print(_tidy(rates))
    return EXIT_OK


def _tidy(text: str) -> str:
    # 1.0 -> 1 so integral values print the way they were written
    return " ".join(part[:-2] if part.endswith(".0") else part for part in text.split(" "))


def cmd_master(args) -> int:
    sysm = load_system(args.config)
    rho0 = _initial_state(sysm, args)
    grid = TimeGrid.covering(0.0, args.t_max, args.h or sysm.default_step())
    fh, close = _open_out(args.out)
    try:
        if args.populations_only:
            path = master.evolve_populations(sysm, np.diag(rho0).real, grid)
            header = ["t"] + [f"p_{r}" for r in range(sysm.dim)]
            write_csv(fh, header, ([t, *p] for t, p in path))
        else:
            path = master.evolve_unconditioned(sysm, rho0, grid)
            header = ["t"] + matrix_header("", sysm.dim)
            write_csv(fh, header, ([t, *matrix_fields(r)] for t, r in path))
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_trajectories(args) -> int:
    sysm = load_system(args.config)
    rho0 = _initial_state(sysm, args)
    batch = flt.sample_trajectories(
        sysm, rho0, args.t_max, args.seed, args.n, h=args.h, workers=_threads()
    )
    out = FsPath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(args.n - 1)))
    for i, rec in enumerate(batch.records):
        write_record(rec, out / f"record_{i:0{width}d}.jsonl")
    with open(out / "summary.csv", "w", newline="\n") as fh:
        write_csv(fh, ["traj_index", "n_counts", "first_jump_time", "first_jump_m", "first_jump_n"], batch.summary_rows())
    return EXIT_OK


def cmd_smooth(args) -> int:
    sysm = load_system(args.config)
    rho0 = _initial_state(sysm, args)
    record = read_record(args.record).validate_for(sysm)
    t_max = record.horizon if args.t_max is None else args.t_max
    grid = TimeGrid.covering(0.0, t_max, args.h or sysm.default_step())
    filt = flt.filter_along_record(sysm, rho0, record, grid)
    zak = flt.zakai_along_record(sysm, rho0, record, grid)
    eff = smoother.backward_effect(sysm, record, grid)
    like = smoother.record_likelihood(sysm, zak, eff)
    drift = float(np.max(np.abs(like - like[0])) / abs(like[0]))
    n = sysm.dim
    header = ["t"] + matrix_header("rho_", n) + matrix_header("E_", n) + ["likelihood"]
    fh, close = _open_out(args.out)
    try:
        rows = []
        for k, (t, rho) in enumerate(filt):
            e = eff.values[k]
            if args.normalized_effect:
                e = smoother.normalized_effect(e)
            rows.append([t, *matrix_fields(rho), *matrix_fields(e), like[k]])
        write_csv(fh, header, rows)
    finally:
        if close:
            fh.close()
    print(f"max_relative_drift={fmt(drift)}")
    for j in eff.jumps:
        rank = smoother.numerical_rank(j.left)
        print(f"event t={fmt(j.time)} channel={j.channel} E_left_rank={rank}")
    return EXIT_OK


def cmd_ancilla(args) -> int:
    sysm = load_system(args.config)
    rho0 = _initial_state(sysm, args)
    record = read_record(args.record).validate_for(sysm)
    inst = ancilla.load_instrument(args.instrument)
    h = args.h or sysm.default_step()
    if not 0.0 < args.sigma < record.horizon:
        raise InvalidRecord(f"--sigma {args.sigma!r} must lie inside (0, {record.horizon!r})")
    if args.boundary is not None:
        ch = sysm.check_channel(tuple(args.boundary), require_positive=True)
        filt = flt.filter_along_record(sysm, rho0, record, TimeGrid.covering(0.0, args.sigma, h))
        eff = smoother.backward_effect(sysm, record, TimeGrid.covering(args.sigma, record.horizon, h))
        res = ancilla.boundary_probs(
            filt.left_limit(args.sigma), ch, eff.right_limit(args.sigma), sysm.rates[ch], inst
        )
    else:
        try:
            res = ancilla.smoothed_outcome_probs(
                sysm, rho0, record, args.sigma, inst, TimeGrid.covering(0.0, record.horizon, h)
            )
        except SigmaOnEvent as exc:
            raise SigmaOnEvent(f"{exc} (hint: pass --boundary m n)") from None
    _emit_json(args.out, res.to_dict())
    return EXIT_OK


def cmd_oracle(args) -> int:
    sysm = load_system(args.config)
    rho0 = _initial_state(sysm, args)
    record = read_record(args.record).validate_for(sysm)
    inst = ancilla.load_instrument(args.instrument)
    pattern = oracle.record_to_pattern(record, args.dt, args.steps)
    q = oracle.oracle_smoothed_probs(sysm, rho0, pattern, args.steps, args.dt, args.sigma_step, inst)
    _emit_json(args.out, {"q": q.tolist()})
    return EXIT_OK


def _emit_json(path: str | None, obj) -> None:
    fh, close = _open_out(path)
    try:
        fh.write(json_text(obj) + "\n")
    finally:
        if close:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jumpsmooth", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, state=True, step=True):
        p.add_argument("config", help="system config (JSON)")
        if state:
            p.add_argument("--level", type=int, default=None, help="start in this level (default: top)")
            p.add_argument("--populations", default=None, help="diagonal start state, comma-separated")
        if step:
            p.add_argument("--h", type=float, default=None, help="step (default 1e-3/max(Gamma,1))")

    p = sub.add_parser("validate", help="check a config and print its frequency and rate tables")
    common(p, state=False, step=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("master", help="record-averaged evolution as CSV")
    common(p)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--populations-only", action="store_true", help="integrate the rate equations only")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_master)

    p = sub.add_parser("traj", aliases=["trajectories"], help="sample count records")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser("smooth", help="forward filter, backward effect and likelihood along a record")
    common(p)
    p.add_argument("--record", required=True)
    p.add_argument("--t-max", type=float, default=None, help="grid end (default: record horizon)")
    p.add_argument("--normalized-effect", action="store_true", help="emit trace-normalized E(t)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("ancilla", help="smoothed ancilla outcome probabilities")
    common(p)
    p.add_argument("--record", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--instrument", required=True)
    p.add_argument("--boundary", type=int, nargs=2, metavar=("M", "N"), default=None,
                   help="evaluate the coupling at the instant of a count in channel (M,N)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ancilla)

    p = sub.add_parser("oracle", help="discrete-time brute-force ancilla probabilities")
    common(p, step=False)
    p.add_argument("--record", required=True)
    p.add_argument("--instrument", required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--sigma-step", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_DOMAIN
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except RecordParseError as exc:
        print(f"error: record parse error at {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON ({exc})", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except JumpSmoothError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

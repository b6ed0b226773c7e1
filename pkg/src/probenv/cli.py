"""Command-line driver: trim, estimate, build-db, simulate, query.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical or convergence
failure, 3 simulation flagged loss of control.  Every file-producing command
writes ``<out>.meta.json`` next to its output with the arguments, package
version and a hash of the model configuration, and nothing time-dependent,
so reruns reproduce outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys

import numpy as np

from . import __version__
from .errors import ProbEnvError
from .grid import DEFAULT_GRID, GridSpec

log = logging.getLogger("probenv")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_LOC = 0, 1, 2, 3
ENV_NAMES = ("p", "q", "r", "alpha", "beta", "vg", "h")


class UsageError(Exception):
    pass


def _model(spec):
    from .dynamics import load_model

    try:
        return load_model(spec)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot load model {spec!r}: {exc}") from exc


def _model_hash(model) -> str:
    cfg = getattr(model, "config", None)
    if cfg is None:
        cfg = {k: v for k, v in vars(model).items() if isinstance(v, (int, float, str))}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _write_meta(path, command, args, extra=None, model=None):
    meta = {"command": command, "version": __version__, "args": _jsonable(vars(args))}
    if model is not None:
        meta["model"] = model.name
        meta["model_sha256"] = _model_hash(model)
    meta.update(extra or {})
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(d):
    return {k: v for k, v in d.items() if k not in ("func", "out", "verbose") and isinstance(v, (str, int, float, bool, list, tuple, type(None)))}


# -- subcommands -------------------------------------------------------------


def cmd_trim(args):
    from .trim import build_trim_set

    model = _model(args.model)
    try:
        nh, nm = (int(v) for v in args.grid.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--grid must look like NxM, got {args.grid!r}") from exc
    ts = build_trim_set(model, tuple(args.h_range), tuple(args.mach_range), (nh, nm), args.k_trim,
                        args.max_fail_frac)
    ts.export_csv(args.out)
    _write_meta(args.out, "trim", args, {"k_trim": args.k_trim, "failed": [list(f) for f in ts.failed]}, model)
    log.info("trim set %dx%d written to %s (%d failed nodes)", nh, nm, args.out, len(ts.failed))
    return EXIT_OK


def _initial_set(model, args):
    from .pendulum import PendulumModel, PendulumTrimSet
    from .trim import TrimSet

    if isinstance(model, PendulumModel):
        return PendulumTrimSet(model)
    if not args.trimset:
        raise UsageError("--trimset is required for aircraft models")
    try:
        return TrimSet.load_csv(model, args.trimset)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read trim set {args.trimset!r}: {exc}") from exc


def cmd_estimate(args):
    from .reachability import SamplerConfig, run_monte_carlo

    model = _model(args.model)
    init = _initial_set(model, args)
    cfg = SamplerConfig(T_f=args.tf, dt=args.dt, N=args.n, seed=args.seed, w_dist=args.w_dist,
                        allow_long_horizon=args.allow_long_horizon)
    direction = {"fwd": "forward", "bwd": "backward"}[args.direction]
    ss = run_monte_carlo(model, init, cfg, direction)
    ss.to_csv(args.out, sidecar=False)
    _write_meta(args.out, "estimate", args, {"sampler": ss.metadata()}, model)
    log.info("%d %s samples written to %s (%d discarded)", len(ss), direction, args.out, ss.discards)
    return EXIT_OK


def _load_samples(path):
    from .reachability import SampleSet

    try:
        return SampleSet.from_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read samples {path!r}: {exc}") from exc


def cmd_build_db(args):
    from .envelope_db import build_database

    try:
        grid = GridSpec.parse(args.grid) if args.grid else GridSpec.from_rows(DEFAULT_GRID)
    except ProbEnvError as exc:
        raise UsageError(str(exc)) from exc
    fwd, bwd = _load_samples(args.fwd), _load_samples(args.bwd)
    for ss in (fwd, bwd):
        missing = [n for n in grid.names if n not in ss.coord_names]
        if missing:
            raise UsageError(f"samples lack coordinates {missing}")
    log.info("grid %s: %d nodes", "x".join(map(str, grid.shape)), grid.n_nodes)
    db, mem = build_database(fwd, bwd, grid, args.epsilon, args.k0)
    log.info("bandwidths fwd %s", np.array2string(np.asarray(db.meta["bandwidths_fwd"]), precision=4))
    log.info("bandwidths bwd %s", np.array2string(np.asarray(db.meta["bandwidths_bwd"]), precision=4))
    log.info("membership maximum at %s", dict(zip(grid.names, db.meta["argmax"])))
    db.save(args.out)
    _write_meta(args.out, "build-db", args, {"grid": [list(r) for r in zip(grid.names, grid.mins, grid.maxs, grid.steps)],
                                             **db.meta})
    return EXIT_OK


def _load_db(path):
    from .envelope_db import EnvelopeDatabase
    from .errors import DatabaseFormatError

    try:
        return EnvelopeDatabase.load(path)
    except (OSError, DatabaseFormatError) as exc:
        raise UsageError(f"cannot read database {path!r}: {exc}") from exc


def _maneuver(args):
    from .sim import SURROGATE_PEAK_A, ManeuverSpec, maneuver_a, maneuver_b

    if args.maneuver == "a":
        return maneuver_a(SURROGATE_PEAK_A if args.peak is None else args.peak)
    if args.maneuver == "b":
        return maneuver_b() if args.peak is None else maneuver_b(args.peak)
    try:
        with open(args.maneuver, encoding="utf-8") as fh:
            spec = ManeuverSpec.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read maneuver {args.maneuver!r}: {exc}") from exc
    return spec


def cmd_simulate(args):
    from .sim import run_closed_loop

    if args.fep != "none" and not args.db:
        raise UsageError(f"--fep {args.fep} needs --db")
    model = _model(args.model)
    db = _load_db(args.db) if args.db else None
    man = _maneuver(args)
    lg = run_closed_loop(model, fep_mode=args.fep, db=db, maneuver=man, T_end=args.t_end, seed=args.seed,
                         h0=args.h0, mach0=args.mach0)
    lg.export(args.out, sidecar=False)
    _write_meta(args.out, "simulate", args, {"run": lg.meta}, model)
    if lg.loc:
        log.warning("loss of control flagged (%s)", lg.meta.get("reason") or "limit exceeded")
        return EXIT_LOC
    return EXIT_OK


def _parse_state(text, n=7):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"malformed state {text!r}") from exc
    if len(vals) != n or not np.all(np.isfinite(vals)):
        raise UsageError(f"state needs {n} finite comma-separated values, got {text!r}")
    return np.array(vals)


def cmd_query(args):
    db = _load_db(args.db)
    full = dict(zip(ENV_NAMES, _parse_state(args.state)))
    missing = [n for n in db.names if n not in full]
    if missing:
        raise UsageError(f"database dimensions {missing} are not envelope coordinates")
    x = np.array([full[n] for n in db.names])
    M, J, flag = db.query_metric(x)
    out = {"names": list(db.names), "M_env": M, "J_env": [float(v) for v in J], "flag": int(flag)}
    if db.constraints is not None:
        lo, hi, _ = db.query_constraints(x)
        out["x_min"] = [float(v) for v in lo]
        out["x_max"] = [float(v) for v in hi]
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="probenv", description="Probabilistic flight envelope estimation and protection.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trim", help="solve trim on an (h, Mach) grid")
    p.add_argument("--model", default="generic-fighter-6dof", help="built-in model name or JSON config")
    p.add_argument("--h-range", nargs=2, type=float, default=[10000.0, 30000.0], metavar=("A", "B"))
    p.add_argument("--mach-range", nargs=2, type=float, default=[0.4, 1.2], metavar=("A", "B"))
    p.add_argument("--grid", default="5x17", help="NxM nodes in h and Mach")
    p.add_argument("--k-trim", type=float, default=1.0)
    p.add_argument("--max-fail-frac", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trim)

    p = sub.add_parser("estimate", help="Monte Carlo reachable-set samples")
    p.add_argument("--model", default="generic-fighter-6dof")
    p.add_argument("--trimset", help="trim-set CSV (aircraft models)")
    p.add_argument("--tf", type=float, default=1.5, help="time horizon [s]")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=("fwd", "bwd"), default="fwd")
    p.add_argument("--w-dist", choices=("normal", "uniform"), default="normal")
    p.add_argument("--allow-long-horizon", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("build-db", help="KDE, membership and envelope database")
    p.add_argument("--fwd", required=True)
    p.add_argument("--bwd", required=True)
    p.add_argument("--grid", help="name:min:max:step,... in database units (default: full 7-D table)")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--k0", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("simulate", help="closed-loop maneuver")
    p.add_argument("--model", default="generic-fighter-6dof")
    p.add_argument("--db")
    p.add_argument("--maneuver", default="a", help="a, b or a maneuver JSON file")
    p.add_argument("--peak", type=float, help="override the maneuver peak [deg]")
    p.add_argument("--fep", choices=("none", "scb", "prob"), default="none")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h0", type=float, default=20000.0)
    p.add_argument("--mach0", type=float, default=0.85)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("query", help="metric, gradient and constraints at one state")
    p.add_argument("--db", required=True)
    p.add_argument("--state", required=True, help="p,q,r,alpha,beta,vg,h in database units")
    p.set_defaults(func=cmd_query)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"probenv: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"probenv: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProbEnvError as exc:
        print(f"probenv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

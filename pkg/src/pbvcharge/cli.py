"""Command-line interface: ``pbvcharge <subcommand> [options]``.

Errors leave as one stderr line ``error: CODE: message``, and the exit status
is 2 for config/domain problems, 3 for fit failures, and 4 for IO failures.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import __version__
from .config import config_hash, load_config
from .errors import ConfigError, DomainError, OutputError, PbvError
from .estimators import estimate_population, fit_monoexponential, fit_power_law, histogram_counts
from .output import dumps_json, table_to_csv, write_results
from .ple import Spectrum, detect_peak, fit_to_json, simulate_ple_scan
from .pulses import scan_grid, sequence_from_dict
from .reproduce import (FIGURES, SCHEMA_VERSION, ResultBundle, Stage, Table, mechanism_stage,
                        reproduce_mechanism, reproduce_population, run_reproduction)
from .simulate import PhotonTrace, simulate_ensemble


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # on subparsers the defaults are suppressed so flags given before the subcommand survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="YAML experiment config")
    p.add_argument("--seed", type=_u64, default=d(None), help="master seed (overrides config)")
    p.add_argument("--out", default=d(None), help="output directory; without it results go to stdout")
    p.add_argument("--format", choices=("csv", "json"), default=d(None))
    p.add_argument("--jobs", type=_positive_int, default=d(1), help="worker threads for ensembles")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbvcharge", parents=[_global_flags(False)],
                                     description="Charge-state dynamics simulator and estimators.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]

    p = sub.add_parser("simulate", parents=common, help="simulate photon traces for the config's sequence")
    p.add_argument("--n-reps", type=_positive_int, help="override the config's n_reps")
    p.add_argument("--jumps", action="store_true", help="also emit charge-jump records")

    p = sub.add_parser("fit-decay", parents=common, help="mono-exponential fit of a t_s,signal CSV")
    p.add_argument("input")
    p.add_argument("--weighting", choices=("none", "poisson"), default="none")

    p = sub.add_parser("fit-power", parents=common, help="power-law fit of a power_uW,rate_Hz,rate_err_Hz CSV")
    p.add_argument("input")
    p.add_argument("--method", choices=("loglog", "nonlinear"), default="loglog")
    p.add_argument("--fixed-exponent", type=float)

    p = sub.add_parser("ple", parents=common, help="fit a PLE spectrum CSV, or simulate one from the config")
    p.add_argument("--input", help="detuning_GHz,counts CSV; simulated from the config if omitted")
    p.add_argument("--dwell", type=float, help="dwell per point in ms (defaults to the config's scan dwell)")

    p = sub.add_parser("histogram", parents=common, help="count histogram of a traces CSV")
    p.add_argument("input")
    p.add_argument("--window", type=int, help="window index to histogram (all windows if omitted)")
    p.add_argument("--threshold", type=int, default=3)

    sub.add_parser("population", parents=common, help="population surface over the config's green grid")
    sub.add_parser("mechanism", parents=common, help="print the photon-order table")

    p = sub.add_parser("reproduce", parents=common, help="run a figure-analogue pipeline")
    p.add_argument("fig_id", choices=FIGURES)
    return parser


# -- input helpers -------------------------------------------------------------

def _read_csv(path, columns):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from None
    if not rows:
        raise DomainError(f"{path}: no data rows")
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise DomainError(f"{path}: missing column(s) {', '.join(missing)}")
    out = {}
    for c in columns:
        try:
            out[c] = np.array([float(r[c]) for r in rows])
        except (TypeError, ValueError):
            raise DomainError(f"{path}: non-numeric value in column {c}") from None
    return out


def _config(args, required=True):
    if args.config is None:
        if required:
            raise ConfigError("--config", f"the {args.command} command needs a config file")
        return None
    return load_config(args.config)


def _bundle(name, stage, cfg=None, seed=None) -> ResultBundle:
    meta = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": name,
            "seed": seed, "config_hash": config_hash(cfg) if cfg is not None else None}
    return ResultBundle(meta, {name: stage}, {})


# -- commands -----------------------------------------------------------------

def cmd_simulate(args, cfg):
    seq = sequence_from_dict(cfg.sequence)
    n = args.n_reps or cfg.n_reps
    ens = simulate_ensemble(seq, cfg.rates, cfg.emission, cfg.line, args.seed, n, jobs=args.jobs,
                            keep_trajectories=args.jumps)
    rows = []
    for rep, tr in enumerate(ens.traces):
        for w, (c, t0, t1) in enumerate(zip(tr.counts, tr.t_start, tr.t_stop)):
            rows.append((rep, w, float(t0) * 1e3, float(t1) * 1e3, int(c)))
    tables = {"traces": Table(["rep", "window_index", "t_start_ms", "t_stop_ms", "count"], rows)}
    if args.jumps:
        jumps = [(rep, float(t), s.value) for rep, traj in enumerate(ens.trajectories) for t, s in traj.jumps]
        tables["jumps"] = Table(["rep", "jump_time_s", "new_state"], jumps)
    counts = np.stack([tr.counts for tr in ens.traces])
    return Stage(tables, {"n_reps": n, "mean_counts": counts.mean(axis=0).tolist()})


def cmd_fit_decay(args, cfg):
    d = _read_csv(args.input, ["t_s", "signal"])
    fit = fit_monoexponential(d["t_s"], d["signal"], weighting=args.weighting)
    return Stage({}, {"fit": fit.to_dict()})


def cmd_fit_power(args, cfg):
    d = _read_csv(args.input, ["power_uW", "rate_Hz", "rate_err_Hz"])
    err = d["rate_err_Hz"] if np.all(d["rate_err_Hz"] > 0) else None
    fit = fit_power_law(d["power_uW"], d["rate_Hz"], err, fixed_exponent=args.fixed_exponent,
                        method=args.method)
    return Stage({}, {"fit": fit.to_dict()})


def cmd_ple(args, cfg):
    if args.input:
        d = _read_csv(args.input, ["detuning_GHz", "counts"])
        dwell = args.dwell if args.dwell is not None else (cfg.scan.dwell if cfg else None)
        if dwell is None:
            raise ConfigError("--dwell", "needed when fitting a spectrum without a config")
        spec = Spectrum(d["detuning_GHz"], d["counts"], dwell)
    else:
        if cfg is None:
            raise ConfigError("--config", "needed to simulate a spectrum (or pass --input)")
        sc = cfg.scan
        grid = scan_grid(sc.start, sc.stop, sc.step)
        spec = simulate_ple_scan(cfg.line, grid, args.dwell or sc.dwell, args.seed)
    decision = detect_peak(spec)
    table = Table(["detuning_GHz", "counts"], [(float(x), int(c)) for x, c in zip(spec.detuning, spec.counts)])
    rec = {"present": decision.present, "significance": decision.significance,
           "fit": fit_to_json(decision.fit) if decision.fit else None}
    return Stage({"spectrum": table}, rec)


def cmd_histogram(args, cfg):
    d = _read_csv(args.input, ["rep", "window_index", "count"])
    reps = d["rep"].astype(int)
    traces = []
    for r in np.unique(reps):
        sel = reps == r
        order = np.argsort(d["window_index"][sel])
        counts = d["count"][sel][order].astype(np.int64)
        z = np.zeros(len(counts))
        traces.append(PhotonTrace(counts, z, z, d["window_index"][sel][order].astype(int)))
    hist = histogram_counts(traces, args.window)
    pop = estimate_population(np.repeat(hist.edges, hist.frequencies), args.threshold)
    table = Table(["count", "frequency"], [(int(e), int(f)) for e, f in zip(hist.edges, hist.frequencies)])
    return Stage({"histogram": table}, {"population": pop.to_dict()})


def cmd_population(args, cfg):
    return reproduce_population(cfg, args.seed, args.jobs)


def cmd_mechanism(args, cfg):
    return mechanism_stage() if cfg is None else reproduce_mechanism(cfg)


_COMMANDS = {
    "simulate": (cmd_simulate, True),
    "fit-decay": (cmd_fit_decay, False),
    "fit-power": (cmd_fit_power, False),
    "ple": (cmd_ple, False),
    "histogram": (cmd_histogram, False),
    "population": (cmd_population, True),
    "mechanism": (cmd_mechanism, False),
}


def _emit(bundle, args, cfg, stdout_table=None):
    out = args.out or (cfg.output.dir if cfg is not None else None)
    fmt = args.format or (cfg.output.format if cfg is not None else "csv")
    if out is None:
        name, stage = next(iter(bundle.stages.items()))
        if stdout_table:
            sys.stdout.write(table_to_csv(stage.tables[stdout_table]))
        else:
            sys.stdout.write(dumps_json({"metadata": bundle.metadata, "records": stage.records}))
        return
    manifest = write_results(bundle, fmt, out)
    for f in manifest["files"]:
        print(f"{out}/{f['name']}  {f['sha256']}")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "reproduce":
        cfg = _config(args)
        bundle = run_reproduction(args.fig_id, cfg, args.seed, args.jobs)
        _emit(bundle, args, cfg)
        return 0
    fn, needs_cfg = _COMMANDS[args.command]
    cfg = _config(args, needs_cfg)
    if args.seed is None:
        args.seed = cfg.seed if cfg is not None else 0
    stage = fn(args, cfg)
    bundle = _bundle(args.command.replace("-", "_"), stage, cfg, args.seed)
    _emit(bundle, args, cfg, "orders" if args.command == "mechanism" else None)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except PbvError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {exc.code}: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IO_ERROR: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

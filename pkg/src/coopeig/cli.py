"""Command-line front end.

Subcommands: gen-matrix, gen-graph, train, simulate, sweep, report.
Exit codes are a stable contract: 0 success/converged, 2 usage error,
3 max-rounds reached, 4 divergence, 5 I/O failure.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import comm_graph, matrix_core, simulator
from .local_estimator import TrainConfig, init_mlp, save_params, synthesize_training_set, train
from .seeding import child_seed, keyed_rng
from .simulator import (
    ConfigError,
    SimConfig,
    config_from_dict,
    config_to_dict,
    export_csv,
    fit_error_bound,
    load_config,
    run_simulation,
    save_snapshot,
    summary_from_snapshot,
    summary_report,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ROUNDS = 3
EXIT_DIVERGED = 4
EXIT_IO = 5


def _parse_spectrum(spec: str, n: int, seed: int):
    """Either a path to a whitespace-separated list of values, or a
    'lo:hi' range drawn uniformly with a seed-derived stream."""
    if os.path.exists(spec):
        with open(spec) as f:
            values = np.array([float(t) for t in f.read().split()])
        if values.shape != (n,):
            raise ValueError(f"spectrum file holds {values.size} values, need {n}")
        return np.sort(values)
    lo, hi = (float(t) for t in spec.split(":"))
    return np.sort(keyed_rng(seed, "spectrum-range").uniform(lo, hi, n))


def cmd_gen_matrix(args) -> int:
    spectrum = _parse_spectrum(args.spectrum, args.n, args.seed)
    A = matrix_core.generate_spd(args.n, spectrum, child_seed(args.seed, "matrix"))
    matrix_core.save_matrix(A, args.out)
    print(" ".join(f"{v:.17g}" for v in spectrum))
    return EXIT_OK


def cmd_gen_graph(args) -> int:
    g = comm_graph.build_graph(args.topology, args.m, args.seed)
    comm_graph.save_graph(g, args.out)
    print(f"{args.topology} m={g.m} edges={len(g.edges)} "
          f"connected={comm_graph.is_connected(g)}")
    return EXIT_OK


def cmd_train(args) -> int:
    hidden = tuple(int(h) for h in args.hidden.split(",") if h)
    tset = synthesize_training_set(args.k, args.samples, (args.lo, args.hi),
                                   child_seed(args.seed, "mlp-data"))
    p0 = init_mlp(args.k, hidden, child_seed(args.seed, "mlp-init"))
    params, losses = train(p0, tset, TrainConfig(args.lr, args.epochs))
    save_params(params, args.out)
    print(f"trained k={args.k} hidden={hidden} epochs={args.epochs} "
          f"final_loss={losses[-1]:.6g}")
    return EXIT_OK


def _default_csv_path(config_path: str) -> str:
    root, _ = os.path.splitext(config_path)
    return root + ".csv"


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    trace = run_simulation(cfg)
    out = args.out or _default_csv_path(args.config)
    export_csv(trace, out)
    if args.snapshot:
        save_snapshot(trace, args.snapshot)
    sys.stdout.write(summary_report(trace))
    if trace.stop_reason == "max_rounds":
        return EXIT_MAX_ROUNDS
    if trace.stop_reason == "diverged":
        return EXIT_DIVERGED
    return EXIT_OK


def _apply_sweep_value(cfg: SimConfig, param: str, value: float, seed: int) -> SimConfig:
    d = config_to_dict(cfg)
    if param == "p":
        d["failure_p"] = value
    elif param == "gamma":
        d["gamma"] = value
    elif param == "sigma":
        d["estimator"]["sigma"] = value
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    d["seed"] = seed
    return config_from_dict(d)


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = [float(v) for v in args.values.split(",") if v]
    if not values:
        raise ValueError("no sweep values given")

    jobs = []
    for vi, value in enumerate(values):
        for trial in range(args.trials):
            seed = child_seed(base.seed, "sweep", vi, trial)
            jobs.append((vi, value, _apply_sweep_value(base, args.param, value, seed)))

    def run_one(job):
        return run_simulation(job[2])

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            traces = list(pool.map(run_one, jobs))
    else:
        traces = [run_one(j) for j in jobs]

    lines = ["param,value,trials,mean_rounds,min_rounds,max_rounds,"
             "mean_final_error,min_final_error,max_final_error,mean_gamma_hat"]
    for vi, value in enumerate(values):
        group = [t for (gi, _, _), t in zip(jobs, traces) if gi == vi]
        rounds = np.array([t.rounds_used for t in group])
        errors = np.array([t.final_consensus_error for t in group])
        gammas = [fit_error_bound(t).gamma_hat for t in group if len(t.rounds) >= 10]
        mean_gamma = float(np.mean(gammas)) if gammas else float("nan")
        lines.append(
            f"{args.param},{value:.17g},{len(group)},"
            f"{rounds.mean():.17g},{rounds.min()},{rounds.max()},"
            f"{errors.mean():.17g},{errors.min():.17g},{errors.max():.17g},"
            f"{mean_gamma:.17g}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    snap = simulator.load_snapshot(args.snapshot)
    sys.stdout.write(summary_from_snapshot(snap))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopeig",
        description="Distributed cooperative eigenvalue estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-matrix", help="generate an SPD matrix with a known spectrum")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--spectrum", required=True,
                   help="values file, or 'lo:hi' uniform range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_matrix)

    p = sub.add_parser("gen-graph", help="generate a communication graph")
    p.add_argument("--topology", required=True,
                   help="ring | complete | path | er:<p_edge>")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("train", help="train a local estimator network")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=5.0)
    p.add_argument("--hidden", default="32", help="comma-separated hidden sizes")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run one simulation from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="trace CSV path (default: next to config)")
    p.add_argument("--snapshot", help="also write a re-runnable snapshot")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep one parameter over repeated trials")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=["p", "gamma", "sigma"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="aggregate CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print the summary for a saved snapshot")
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:  # console-script wrapper
    sys.exit(main())


if __name__ == "__main__":
    entry()

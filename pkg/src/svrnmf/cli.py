"""Command-line entry point.

Subcommands: synth, factorize, benchmark, inject-outliers, mosaic.
Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
All randomness flows from explicit --seed flags. The NMF_LOG_LEVEL
environment variable (error | info | debug) controls logging verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .dataio import (
    DataFormatError,
    OutlierSpec,
    SyntheticSpec,
    gen_synthetic,
    inject_outliers,
    load_matrix,
    normalization_projector,
    save_matrix,
)
from .harness import (
    SOLVER_NAMES,
    ConfigError,
    emit_basis_mosaic,
    format_summary,
    load_experiment_config,
    run_experiment,
    run_solver,
    save_factors,
)
from .model import NumericalDivergenceError, ShapeError

log = logging.getLogger("svrnmf")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _configure_logging() -> None:
    level_name = os.environ.get("NMF_LOG_LEVEL", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(f"warning: ignoring NMF_LOG_LEVEL={level_name!r} "
              f"(expected one of {sorted(levels)})", file=sys.stderr)
        level_name = "info"
    logging.basicConfig(level=levels[level_name],
                        format="%(levelname)s %(name)s: %(message)s")


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(n_features=args.rows, n_samples=args.cols,
                         rank=args.rank, seed=args.seed)
    V, W_true, H_true = gen_synthetic(spec)
    save_matrix(V, args.out)
    log.info("wrote %dx%d matrix to %s", V.shape[0], V.shape[1], args.out)
    if args.factors_out:
        save_matrix(W_true, args.factors_out + ".W.nnmf")
        save_matrix(H_true, args.factors_out + ".H.nnmf")
        log.info("wrote ground-truth factors with prefix %s", args.factors_out)
    return EXIT_OK


def _cmd_factorize(args) -> int:
    V = load_matrix(args.data)
    params: dict = {}
    for key in ("inner_iters", "alpha0", "decay", "beta", "epsilon",
                "rel_tol", "lam", "batch_size"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    factors, trace, residuals = run_solver(
        args.solver, V, args.rank, args.epochs, args.seed,
        f_star=args.fstar, timing=(args.timing == "wall"), params=params,
    )
    trace.write_csv(args.trace)
    prefix = args.factors_out
    if prefix is None:
        prefix = args.trace[:-4] if args.trace.endswith(".csv") else args.trace
    save_factors(factors, prefix, residuals)
    final = trace.final
    log.info("solver %s finished: epochs=%d grad_count=%d cost=%.6e",
             args.solver, final.epoch, final.grad_count, final.cost)
    print(f"{args.solver}: final cost {final.cost!r}, "
          f"gap {final.optimality_gap!r}, trace {args.trace}")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    config = load_experiment_config(args.config)
    if args.jobs is not None:
        config.jobs = args.jobs
    result = run_experiment(config)
    print(format_summary(result))
    for path in result.figure_paths:
        print(f"figure: {path}")
    print(f"summary: {result.summary_path}")
    if any(not run.ok for run in result.runs):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_inject_outliers(args) -> int:
    V = load_matrix(args.data)
    spec = OutlierSpec(density=args.rho, low=args.low, high=args.high,
                       seed=args.seed)
    corrupted, mask = inject_outliers(V, spec)
    if args.normalize:
        corrupted = normalization_projector(corrupted)
    save_matrix(corrupted, args.out)
    log.info("corrupted %d of %d entries", int(mask.sum()), mask.size)
    if args.mask_out:
        save_matrix(mask.astype(float), args.mask_out)
    return EXIT_OK


def _cmd_mosaic(args) -> int:
    W = load_matrix(args.weights)
    emit_basis_mosaic(W, args.tile_width, args.tile_height, args.out)
    log.info("wrote %d-basis mosaic to %s", W.shape[1], args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svrnmf",
        description="Nonnegative matrix factorization with stochastic "
                    "variance-reduced multiplicative updates.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic low-rank dataset")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output matrix file")
    p.add_argument("--factors-out", help="optional prefix for ground-truth factors")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("factorize", help="run one solver on a data matrix")
    p.add_argument("--data", required=True, help=".nnmf or .csv matrix file")
    p.add_argument("--solver", required=True, choices=SOLVER_NAMES)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--epochs", type=int, default=100,
                   help="epochs (stochastic) or iterations (batch)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", required=True, help="output trace CSV path")
    p.add_argument("--factors-out", help="prefix for final factor files "
                                         "(default: derived from --trace)")
    p.add_argument("--fstar", type=float, default=0.0,
                   help="reference optimum for the gap column (default 0)")
    p.add_argument("--timing", choices=("wall", "none"), default="wall")
    p.add_argument("--inner-iters", dest="inner_iters", type=int)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--beta", type=float, help="repeat-budget fraction (acc solvers)")
    p.add_argument("--epsilon", type=float, help="dynamic-stop ratio (acc solvers)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="outlier penalty weight (rsvrmu)")
    p.add_argument("--rel-tol", dest="rel_tol", type=float,
                   help="relative stopping tolerance (batch solvers)")
    p.set_defaults(func=_cmd_factorize)

    p = sub.add_parser("benchmark", help="run a TOML-described experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, help="parallel (solver, seed) runs")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("inject-outliers", help="additively corrupt a matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--rho", type=float, required=True, help="corruption density")
    p.add_argument("--low", type=float, required=True)
    p.add_argument("--high", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", help="optional 0/1 corruption-mask CSV")
    p.add_argument("--normalize", action="store_true",
                   help="rescale into [0, 1] after corruption")
    p.set_defaults(func=_cmd_inject_outliers)

    p = sub.add_parser("mosaic", help="tile basis columns into a PGM image")
    p.add_argument("--weights", required=True, help="W matrix file")
    p.add_argument("--tile-width", type=int, required=True)
    p.add_argument("--tile-height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mosaic)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataFormatError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

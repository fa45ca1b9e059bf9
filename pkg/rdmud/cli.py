"""
rdmud command line.

Subcommands: gen-matrix, coherence, detect, pe-sweep, bounds, tune, reproduce.
Tables and CSV go to stdout; logs and run summaries go to stderr.
Exit codes: 0 success, 1 runtime or config failure, 2 usage error.
"""

import argparse
import io
import math
import sys
import time
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from .detectors import FAMILIES, SYMBOL_STAGES, DetectorSpec, detect
from .error_handling import EXIT_OK, ConfigError, cli_error_boundary
from .experiment_config import (
    ExperimentConfig,
    default_workers,
    load_config,
    load_preset,
    preset_names,
)
from .logging_config import configure_logging, log_run_finish, log_run_start
from .matrix_factory import (
    MatrixRecipe,
    build_matrix,
    coherence,
    gen_kerdock,
    gram_gold,
    gram_identity,
    load_matrix,
    welch_bound,
)
from .model_core import GramMatrix, row_energy
from .monte_carlo import TrialContext, sweep, tune_threshold
from .storage import MatrixStore, read_matrix, read_vector, write_matrix, write_results_csv
from .theory_bounds import BoundParams, dft_coherence_bound, summarize


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _format_value(value) -> str:
    if value is None:
        return "empty"
    if isinstance(value, tuple):
        return "(" + ", ".join(_format_value(v) for v in value) + ")"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return "+inf (no guarantee)"
        if math.isnan(value):
            return "undefined"
        return f"{value:.6g}"
    return str(value)


def _print_table(rows, stream=None):
    stream = stream or sys.stdout
    width = max(len(key) for key, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {_format_value(value)}", file=stream)


def _experiment(args) -> ExperimentConfig:
    if getattr(args, "preset", None):
        config = load_preset(args.preset)
    elif getattr(args, "config", None):
        config = load_config(args.config)
    else:
        raise ConfigError("give a config file or --preset")
    if getattr(args, "trials", None):
        config = config.model_copy(update={"trials": args.trials})
    return config


def _workers(args) -> int:
    return args.threads if args.threads else default_workers()


def _store(args) -> Optional[MatrixStore]:
    return MatrixStore(args.matrix_cache) if args.matrix_cache else None


# ============================================================================
# COMMANDS
# ============================================================================

@cli_error_boundary
def cmd_gen_matrix(args) -> int:
    """Generate a measurement matrix, write it, and report mu, Welch bound and row energy."""
    if args.kind == "kerdock":
        cols = args.cols or args.rows ** 2
        A = gen_kerdock(args.rows, None if cols == args.rows ** 2 else cols, args.seed)
    else:
        if args.cols is None:
            raise ConfigError(f"--cols is required for {args.kind}")
        recipe = MatrixRecipe(args.kind, args.rows, args.cols, args.seed, args.search)
        A = build_matrix(recipe, _workers(args), _store(args))
    if args.out:
        write_matrix(args.out, A.values)
    _print_table([
        ("M", A.M),
        ("N", A.N),
        ("mu", A.coherence if A.N > 1 else None),
        ("welch_bound", welch_bound(A.M, A.N)),
        ("row_energy", row_energy(A)),
        ("output", args.out or "-"),
    ])
    return EXIT_OK


@cli_error_boundary
def cmd_coherence(args) -> int:
    A = load_matrix(args.matrix, normalize=args.normalize)
    rows = [
        ("M", A.M),
        ("N", A.N),
        ("mu", coherence(A)),
        ("welch_bound", welch_bound(A.M, A.N)),
        ("row_energy", row_energy(A)),
    ]
    if args.dft_c is not None:
        bound, floor = dft_coherence_bound(A.M, A.N, args.dft_c)
        rows += [("dft_coherence_bound", bound), ("dft_probability_floor", floor)]
    _print_table(rows)
    return EXIT_OK


def _load_gram(args, N: int) -> GramMatrix:
    if args.gram_file:
        return GramMatrix(np.real(read_matrix(args.gram_file)))
    if args.gram == "gold":
        return gram_gold(N, args.gold_length)
    return gram_identity(N)


@cli_error_boundary
def cmd_detect(args) -> int:
    """Run one detector on y and A read from RDMUD-MAT files."""
    A = load_matrix(args.matrix, normalize=args.normalize)
    y = read_vector(args.y)
    G = _load_gram(args, A.N)
    gains = np.full(A.N, args.gain)
    spec = DetectorSpec(args.detector, K=args.k, xi=args.xi, eps=args.eps, whiten=args.whiten,
                        symbol_stage=args.symbol_stage)
    result = detect(spec, y, A, gains, G, args.sigma2)
    print("support: " + " ".join(str(n) for n in result.support))
    print("symbols: " + " ".join(str(int(s)) for s in result.symbols))
    if result.iterations:
        print(f"iterations: {result.iterations}")
    if result.reselections:
        print(f"reselections: {result.reselections}")
    return EXIT_OK


def _run_sweep(config: ExperimentConfig, workers: int, store: Optional[MatrixStore] = None) -> list:
    spec = config.trial_spec()
    if config.sweep is None:
        return sweep(spec, "detector", config.detector_specs(), config.trials,
                     workers=workers, ci_method=config.ci_method, store=store)
    return sweep(
        spec,
        config.sweep.variable,
        config.sweep_values(),
        config.trials,
        detectors=config.detector_specs(),
        outer=config.outer_sweep(),
        tune_grids=config.sweep.tune,
        workers=workers,
        ci_method=config.ci_method,
        store=store,
    )


def _emit_csv(rows: list, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as f:
            write_results_csv(rows, f)
    else:
        write_results_csv(rows, sys.stdout)


@cli_error_boundary
def cmd_pe_sweep(args) -> int:
    """Run a sweep config and emit one CSV row per estimate."""
    config = _experiment(args)
    started = time.time()
    log_run_start("pe-sweep", config.model_dump())
    rows = _run_sweep(config, _workers(args), _store(args))
    _emit_csv(rows, args.out or config.output)
    duration = time.time() - started
    total = sum(row["trials"] for row in rows)
    failures = sum(row["detector_failures"] for row in rows)
    log_run_finish("pe-sweep", total, duration)
    print(f"{config.name}: {len(rows)} estimates, {total} trials, {failures} detector failures, "
          f"{duration:.1f}s", file=sys.stderr)
    return EXIT_OK


@cli_error_boundary
def cmd_reproduce(args) -> int:
    """Run a shipped preset."""
    if args.list:
        for name in preset_names():
            print(name)
        return EXIT_OK
    if not args.preset:
        raise ConfigError(f"name a preset; available: {', '.join(preset_names())}")
    args.config = None
    return cmd_pe_sweep.__wrapped__(args)


def _bound_params(config: ExperimentConfig, workers: int, store: Optional[MatrixStore] = None) -> BoundParams:
    spec = config.trial_spec()
    context = TrialContext(spec, workers, store)
    return BoundParams.gain_range(
        alpha=config.bounds.alpha,
        N=config.N,
        K=config.K,
        sigma2=config.sigma2,
        mu=context.mu,
        r_min=spec.amplitude.r_min,
        r_max=spec.amplitude.r_max,
        lambda_max_ginv=context.G.lambda_max_inv,
        row_energy=row_energy(context.A),
    )


@cli_error_boundary
def cmd_bounds(args) -> int:
    """Print tau, SNR_min, condition verdicts, threshold ranges and error bounds."""
    config = _experiment(args)
    params = _bound_params(config, _workers(args), _store(args))
    summary = summarize(params, config.bounds.K0)
    rows = [("mu", params.mu), ("lambda_max_ginv", params.lambda_max_ginv)] + list(summary.items())
    bound, floor = dft_coherence_bound(config.matrix.M, config.N, config.bounds.c)
    rows += [("dft_coherence_bound", bound), ("dft_probability_floor", floor)]
    _print_table(rows)

    buffer = io.StringIO()
    keys = [key for key, _ in rows]
    buffer.write(",".join(keys) + "\n")
    buffer.write(",".join(_csv_cell(value) for _, value in rows) + "\n")
    sys.stdout.write("\n" + buffer.getvalue())
    return EXIT_OK


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ";".join(f"{v:.10g}" for v in value)
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return "inf" if math.isinf(value) and value > 0 else f"{value:.10g}"
    return str(value)


@cli_error_boundary
def cmd_tune(args) -> int:
    """Search the config's threshold grid and report pe per threshold."""
    config = _experiment(args)
    if config.tune is None:
        raise ConfigError("config has no tune section")
    spec = config.trial_spec()
    workers = _workers(args)
    context = TrialContext(spec, workers, _store(args))
    result = tune_threshold(spec, config.tune.grid, config.trials, family=config.tune.family,
                            workers=workers, ci_method=config.ci_method, context=context)
    name = "xi" if config.tune.family == "rddt" else "eps"
    print(f"{name},pe,ci_halfwidth")
    for value, estimate in zip(result.grid, result.estimates):
        print(f"{value:.10g},{estimate.pe:.10g},{estimate.ci_half_width:.10g}")
    print(f"best {name}: {result.threshold:.6g} (pe {result.estimate.pe:.6g})", file=sys.stderr)
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def _add_config_source(parser: argparse.ArgumentParser):
    parser.add_argument("config", nargs="?", help="experiment config (JSON)")
    parser.add_argument("--preset", help="use a shipped preset instead of a config file")
    parser.add_argument("--trials", type=positive_int, help="override the configured trial count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdmud", description="Reduced-dimension multiuser detection toolkit")
    parser.add_argument("--threads", type=positive_int, default=None,
                        help="worker processes (results do not depend on this)")
    parser.add_argument("--log-dir", default=None, help="write run/error/debug logs under this directory")
    parser.add_argument("--matrix-cache", default=None,
                        help="directory that keeps generated matrices so searches run once")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-matrix", help="generate a measurement matrix")
    gen.add_argument("--kind", choices=("gaussian", "partial-dft", "kerdock"), required=True)
    gen.add_argument("--rows", type=positive_int, required=True)
    gen.add_argument("--cols", type=positive_int, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--search", type=positive_int, default=1, help="min-coherence candidates")
    gen.add_argument("--out", default=None, help="RDMUD-MAT output path")
    gen.set_defaults(handler=cmd_gen_matrix)

    coh = sub.add_parser("coherence", help="report coherence of a matrix file")
    coh.add_argument("matrix")
    coh.add_argument("--normalize", action="store_true", help="rescale columns to unit norm")
    coh.add_argument("--dft-c", type=float, default=None, help="also print the partial-DFT bound for c")
    coh.set_defaults(handler=cmd_coherence)

    det = sub.add_parser("detect", help="run a detector on y and A files")
    det.add_argument("--y", required=True)
    det.add_argument("--matrix", required=True)
    det.add_argument("--detector", choices=FAMILIES, default="rdd")
    det.add_argument("--k", type=positive_int, default=None)
    det.add_argument("--xi", type=positive_float, default=None)
    det.add_argument("--eps", type=positive_float, default=None)
    det.add_argument("--gain", type=float, default=1.0)
    det.add_argument("--sigma2", type=float, default=None)
    det.add_argument("--gram", choices=("identity", "gold"), default="identity")
    det.add_argument("--gold-length", type=positive_int, default=1023)
    det.add_argument("--gram-file", default=None)
    det.add_argument("--whiten", action="store_true")
    det.add_argument("--symbol-stage", choices=SYMBOL_STAGES, default="sign")
    det.add_argument("--normalize", action="store_true")
    det.set_defaults(handler=cmd_detect)

    pe = sub.add_parser("pe-sweep", help="estimate Pe over a sweep")
    _add_config_source(pe)
    pe.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    pe.set_defaults(handler=cmd_pe_sweep)

    bounds = sub.add_parser("bounds", help="evaluate the closed-form guarantees")
    _add_config_source(bounds)
    bounds.set_defaults(handler=cmd_bounds)

    tune = sub.add_parser("tune", help="search a threshold grid")
    _add_config_source(tune)
    tune.set_defaults(handler=cmd_tune)

    rep = sub.add_parser("reproduce", help="run a shipped preset")
    rep.add_argument("preset", nargs="?")
    rep.add_argument("--list", action="store_true", help="list presets")
    rep.add_argument("--trials", type=positive_int, default=None)
    rep.add_argument("--out", default=None)
    rep.set_defaults(handler=cmd_reproduce)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "detect" and args.detector in ("rdd", "rddf") and args.k is None:
        parser.error(f"--k is required for {args.detector}")
    if args.log_dir:
        configure_logging(args.log_dir)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``simulate``, ``estimate``, ``bench``, ``report``.

Exit codes: 0 success, 1 user error (bad flags, bad input), 2 internal error.
An estimator that fails to converge is reported in the output with exit 0.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (CONFIG_KEYS, ConfigError, ExperimentConfig, SchemaError, config_from_mapping,
                    parse_config_text, read_results, run_experiment, summarize, write_summary)
from .estimators import METHODS, estimate
from .metrics import format_success_table
from .optimize import AdamConfig, BfgsConfig, StoppingCriterion
from .simulate import SimulationPlan, run_plan, write_series_csv

WORKERS_ENV = "STATIONARY_AR_WORKERS"


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _add_fit_flags(p, defaults: bool = True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--learning-rate", type=_positive_float, default=d(AdamConfig.learning_rate),
                   help="Adam learning rate (default: %s)" % AdamConfig.learning_rate)
    p.add_argument("--reltol", type=_positive_float, default=d(StoppingCriterion.reltol),
                   help="relative cost-change stopping tolerance (default: %s)" % StoppingCriterion.reltol)
    p.add_argument("--max-epochs", type=_positive_int, default=d(StoppingCriterion.max_epochs),
                   help="epoch limit for GD and CML (default: %s)" % StoppingCriterion.max_epochs)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stationary-ar", description="Stationarity-constrained AR(p) estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="{simulate,estimate,bench,report}")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    sim = sub.add_parser("simulate", help="sample stationary processes and simulate series",
                         formatter_class=fmt)
    sim.add_argument("--order", type=_positive_int, required=True, help="AR order p")
    sim.add_argument("--processes", type=_positive_int, default=1, help="number of processes")
    sim.add_argument("--reps", type=_positive_int, default=1, help="series per process")
    sim.add_argument("--length", type=_positive_int, default=1500, help="raw length incl. burn-in")
    sim.add_argument("--burn-in", type=_nonneg_int, default=500, help="leading points discarded")
    sim.add_argument("--sigma2", type=_positive_float, default=1.0, help="innovation variance")
    sim.add_argument("--seed", type=_nonneg_int, default=0, help="64-bit master seed")
    sim.add_argument("--out", type=Path, required=True, help="series CSV to write")

    est = sub.add_parser("estimate", help="fit an AR(p) model to a single series",
                         formatter_class=fmt)
    est.add_argument("--method", choices=METHODS, required=True, help="estimator")
    est.add_argument("--order", type=_positive_int, required=True, help="AR order p")
    est.add_argument("--input", type=Path, required=True,
                     help="one numeric column, optional header line")
    _add_fit_flags(est)
    est.add_argument("--out", type=Path, default=None, help="optional CSV with one result row")

    bench = sub.add_parser("bench", help="run the GD vs CML comparison experiment")
    bench.add_argument("--config", type=Path, default=None,
                       help="flat key = value config file; inline flags override it "
                            f"(keys: {', '.join(CONFIG_KEYS)})")
    base = ExperimentConfig()
    bench.add_argument("--orders", default=None,
                       help="comma-separated AR orders (default: %s)" % ",".join(map(str, base.orders)))
    bench.add_argument("--processes", type=_positive_int, default=None,
                       help="processes per order (default: %d)" % base.n_processes)
    bench.add_argument("--reps", type=_positive_int, default=None,
                       help="series per process (default: %d)" % base.n_repetitions)
    bench.add_argument("--length", type=_positive_int, default=None,
                       help="raw series length (default: %d)" % base.raw_length)
    bench.add_argument("--burn-in", type=_nonneg_int, default=None,
                       help="burn-in points (default: %d)" % base.burn_in)
    bench.add_argument("--sigma2", type=_positive_float, default=None,
                       help="innovation variance (default: %s)" % base.sigma2)
    bench.add_argument("--seed", type=_nonneg_int, default=None, help="master seed (default: %d)" % base.seed)
    _add_fit_flags(bench, defaults=False)
    bench.add_argument("--out-dir", type=Path, default=None,
                       help="output directory (default: %s)" % base.output_dir)
    bench.add_argument("--workers", type=_positive_int, default=None,
                       help=f"worker processes (default: ${WORKERS_ENV} or 1)")

    rep = sub.add_parser("report", help="recompute summary tables from a results CSV",
                         formatter_class=fmt)
    rep.add_argument("--input", type=Path, required=True, help="results.csv from bench")
    rep.add_argument("--out-dir", type=Path, default=None, help="also write summary CSV files here")
    return parser


def read_series_file(path: Path) -> np.ndarray:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc.strerror or exc}") from None
    values = []
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    for lineno, row in enumerate(rows):
        if len(row) != 1:
            raise UserError(f"{path}: expected one column, found {len(row)} on data line {lineno + 1}")
        try:
            values.append(float(row[0]))
        except ValueError:
            if lineno == 0:
                continue
            raise UserError(f"{path}: non-numeric value {row[0]!r} on data line {lineno + 1}") from None
    if not values:
        raise UserError(f"{path}: no numeric values")
    x = np.asarray(values)
    if not np.all(np.isfinite(x)):
        raise UserError(f"{path}: values must be finite")
    return x


def _vec(v) -> str:
    return " ".join(f"{c:.6f}" for c in v)


def cmd_simulate(args) -> int:
    if args.burn_in >= args.length:
        raise UserError("--burn-in must be smaller than --length")
    try:
        plan = SimulationPlan(order=args.order, n_processes=args.processes, n_repetitions=args.reps,
                              raw_length=args.length, burn_in=args.burn_in, sigma2=args.sigma2,
                              seed=args.seed)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    items = list(run_plan(plan))
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_series_csv(items, fh)
    except OSError as exc:
        raise UserError(f"cannot write {args.out}: {exc.strerror or exc}") from None
    for item in items:
        if item.repetition == 0:
            print(f"process {item.process_index}: coefficients {_vec(item.process.coefficients)}")
    print(f"wrote {len(items)} series x {plan.raw_length - plan.burn_in} values to {args.out}")
    return 0


def cmd_estimate(args) -> int:
    x = read_series_file(args.input)
    if x.size <= args.order + 1:
        raise UserError(f"series of length {x.size} is too short for order {args.order}")
    if np.ptp(x) == 0:
        raise UserError("series is constant")
    result = estimate(args.method, x, args.order,
                      adam=AdamConfig(learning_rate=args.learning_rate),
                      bfgs=BfgsConfig(),
                      criterion=StoppingCriterion(reltol=args.reltol, max_epochs=args.max_epochs))
    fields = [
        ("method", result.method),
        ("order", args.order),
        ("coefficients", _vec(result.coefficients)),
        ("pacf", _vec(result.pacf)),
        ("max_abs_inverse_root", f"{result.max_abs_inverse_root:.6f}"),
        ("mse", repr(result.final_mse)),
        ("perplexity", repr(result.final_perplexity)),
        ("epochs", result.epochs),
        ("wall_time_ns", result.wall_time_ns),
        ("converged", "true" if result.converged else "false"),
        ("failure_reason", "" if result.failure_reason is None else str(result.failure_reason)),
    ]
    for key, value in fields:
        print(f"{key}: {value}")
    if args.out is not None:
        row = dict(fields)
        row["coefficients"] = ";".join(repr(float(c)) for c in result.coefficients)
        row["pacf"] = ";".join(repr(float(c)) for c in result.pacf)
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(row.keys())
                writer.writerow(row.values())
        except OSError as exc:
            raise UserError(f"cannot write {args.out}: {exc.strerror or exc}") from None
    return 0


def _bench_overrides(args) -> dict:
    values = {}
    if args.orders is not None:
        try:
            values["orders"] = CONFIG_KEYS["orders"](args.orders)
        except ValueError:
            raise UserError(f"bad --orders value {args.orders!r}") from None
    for flag, key in (("processes", "processes"), ("reps", "reps"), ("length", "length"),
                      ("burn_in", "burn_in"), ("sigma2", "sigma2"), ("seed", "seed"),
                      ("learning_rate", "learning_rate"), ("reltol", "reltol"),
                      ("max_epochs", "max_epochs"), ("out_dir", "output_dir"), ("workers", "workers")):
        value = getattr(args, flag)
        if value is not None:
            values[key] = value
    return values


def cmd_bench(args) -> int:
    values = {}
    try:
        if args.config is not None:
            values = parse_config_text(args.config.read_text(encoding="utf-8"))
        values.update(_bench_overrides(args))
        values.setdefault("workers", _default_workers())
        config = config_from_mapping(values)
    except OSError as exc:
        raise UserError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except ConfigError as exc:
        raise UserError(str(exc)) from None
    try:
        path, summary = run_experiment(config)
    except OSError as exc:
        raise UserError(f"cannot write results: {exc}") from None
    print(format_success_table(summary.tables["success"]), end="")
    print(summary.tables["headline"].to_text(), end="")
    print(f"results: {path}")
    return 0


def cmd_report(args) -> int:
    try:
        records = read_results(args.input)
    except OSError as exc:
        raise UserError(f"cannot read {args.input}: {exc.strerror or exc}") from None
    except SchemaError as exc:
        raise UserError(f"{args.input}: {exc}") from None
    if not records:
        raise UserError(f"{args.input}: no result rows")
    summary = summarize(records)
    sys.stdout.write(summary.text)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        write_summary(summary, args.out_dir)
    return 0


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

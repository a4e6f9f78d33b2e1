"""Experiment harness: simulate, fit YW/GD/CML per series, persist one CSV
row per series and aggregate the comparison tables.

Results CSV
-----------
One header row, LF line endings, UTF-8, floats in shortest round-trip form,
coefficient vectors joined with ``;``. Columns are ``series_id, order, seed,
process_index, repetition, sigma2, true_coeffs, true_max_abs_inv_root,
r2_truth`` followed by, for each method in ``yw, gd, cml``: ``coeffs,
converged, failure_reason, epochs, wall_time_ns, mse, perplexity,
max_abs_inv_root, r2`` (prefixed ``<method>_``).
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import characteristic_roots
from .estimators import METHODS, EstimationResult, estimate_cml, estimate_gd, estimate_yw
from .metrics import (BlandAltman, PairedComparison, Table, bland_altman, format_success_table,
                      order_scaling_summary, paired_comparison, quantile_summary,
                      root_proximity_summary, safe_r_squared, success_table)
from .optimize import AdamConfig, BfgsConfig, StoppingCriterion
from .simulate import SimulationPlan, plan_keys, simulate_one

__all__ = [
    "MethodRecord",
    "ExperimentRecord",
    "ExperimentConfig",
    "ConfigError",
    "SchemaError",
    "CSV_COLUMNS",
    "load_config",
    "run_series",
    "run_experiment",
    "write_results",
    "read_results",
    "Summary",
    "summarize",
    "outlier_forensics",
]

METHOD_FIELDS = ("coeffs", "converged", "failure_reason", "epochs", "wall_time_ns", "mse",
                 "perplexity", "max_abs_inv_root", "r2")
BASE_COLUMNS = ("series_id", "order", "seed", "process_index", "repetition", "sigma2",
                "true_coeffs", "true_max_abs_inv_root", "r2_truth")
CSV_COLUMNS = BASE_COLUMNS + tuple(f"{m}_{f}" for m in METHODS for f in METHOD_FIELDS)
TIMING_COLUMNS = tuple(f"{m}_wall_time_ns" for m in METHODS)


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class MethodRecord:
    coeffs: Tuple[float, ...]
    converged: bool
    failure_reason: str
    epochs: int
    wall_time_ns: int
    mse: float
    perplexity: float
    max_abs_inv_root: float
    r2: float

    @classmethod
    def from_result(cls, result: EstimationResult) -> "MethodRecord":
        return cls(
            coeffs=tuple(float(c) for c in result.coefficients),
            converged=bool(result.converged),
            failure_reason="" if result.failure_reason is None else str(result.failure_reason),
            epochs=int(result.epochs),
            wall_time_ns=int(result.wall_time_ns),
            mse=float(result.final_mse),
            perplexity=float(result.final_perplexity),
            max_abs_inv_root=float(result.max_abs_inverse_root),
            r2=safe_r_squared(result.coefficients),
        )


@dataclass(frozen=True)
class ExperimentRecord:
    series_id: str
    order: int
    seed: int
    process_index: int
    repetition: int
    sigma2: float
    true_coeffs: Tuple[float, ...]
    true_max_abs_inv_root: float
    r2_truth: float
    yw: MethodRecord
    gd: MethodRecord
    cml: MethodRecord

    @property
    def gd_converged(self) -> bool:
        return self.gd.converged

    @property
    def cml_converged(self) -> bool:
        return self.cml.converged

    def comparison(self) -> PairedComparison:
        return paired_comparison(
            self.series_id, self.order, self.true_coeffs, self.gd.coeffs, self.cml.coeffs,
            gd_mse=self.gd.mse, cml_mse=self.cml.mse,
            gd_perplexity=self.gd.perplexity, cml_perplexity=self.cml.perplexity,
            gd_time_ns=self.gd.wall_time_ns, cml_time_ns=self.cml.wall_time_ns,
            gd_converged=self.gd.converged, cml_converged=self.cml.converged,
            r2_truth=self.r2_truth, r2_gd=self.gd.r2, r2_cml=self.cml.r2,
            yw_root=self.yw.max_abs_inv_root, gd_root=self.gd.max_abs_inv_root,
            cml_root=self.cml.max_abs_inv_root,
        )

    def without_timing(self) -> "ExperimentRecord":
        return replace(self, **{m: replace(getattr(self, m), wall_time_ns=0) for m in METHODS})


# -- CSV -----------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ";".join(repr(float(v)) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_vector(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(";")) if text else ()


def record_to_row(record: ExperimentRecord) -> List[str]:
    row = [_fmt(getattr(record, name)) for name in BASE_COLUMNS]
    for m in METHODS:
        mr = getattr(record, m)
        row.extend(_fmt(getattr(mr, f)) for f in METHOD_FIELDS)
    return row


_METHOD_PARSERS = {
    "coeffs": _parse_vector, "converged": _parse_bool, "failure_reason": str, "epochs": int,
    "wall_time_ns": int, "mse": float, "perplexity": float, "max_abs_inv_root": float, "r2": float,
}
_BASE_PARSERS = {
    "series_id": str, "order": int, "seed": int, "process_index": int, "repetition": int,
    "sigma2": float, "true_coeffs": _parse_vector, "true_max_abs_inv_root": float, "r2_truth": float,
}


def row_to_record(row: Dict[str, str]) -> ExperimentRecord:
    base = {name: _BASE_PARSERS[name](row[name]) for name in BASE_COLUMNS}
    methods = {m: MethodRecord(**{f: _METHOD_PARSERS[f](row[f"{m}_{f}"]) for f in METHOD_FIELDS})
               for m in METHODS}
    return ExperimentRecord(**base, **methods)


def results_csv_text(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(record_to_row(r))
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(records: Sequence[ExperimentRecord], path) -> None:
    _atomic_write(Path(path), results_csv_text(records))


def parse_results(text: str) -> List[ExperimentRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("results file is empty (missing header row)") from None
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"results file is missing column(s): {', '.join(missing)}")
    records = []
    for lineno, values in enumerate(reader, start=2):
        if not values:
            continue
        if len(values) != len(header):
            raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(values)} "
                              f"(truncated file?)")
        try:
            records.append(row_to_record(dict(zip(header, values))))
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return records


def read_results(path) -> List[ExperimentRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_results(fh.read())


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    orders: Tuple[int, ...] = (1, 2, 3, 4, 5)
    n_processes: int = 50
    n_repetitions: int = 5
    raw_length: int = 1500
    burn_in: int = 500
    sigma2: float = 1.0
    seed: int = 20240601
    adam: AdamConfig = field(default_factory=AdamConfig)
    bfgs: BfgsConfig = field(default_factory=BfgsConfig)
    stopping: StoppingCriterion = field(default_factory=StoppingCriterion)
    output_dir: Path = Path("bench_out")
    workers: int = 1

    def __post_init__(self):
        if not self.orders:
            raise ConfigError("orders must be non-empty")
        if any(p < 1 for p in self.orders):
            raise ConfigError("orders must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for p in self.orders:
            self.plan(p)

    def plan(self, order: int) -> SimulationPlan:
        try:
            return SimulationPlan(order=order, n_processes=self.n_processes,
                                  n_repetitions=self.n_repetitions, raw_length=self.raw_length,
                                  burn_in=self.burn_in, sigma2=self.sigma2, seed=self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def n_series(self) -> int:
        return len(self.orders) * self.n_processes * self.n_repetitions


def _parse_orders(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


# key -> (converter, where it lands)
CONFIG_KEYS = {
    "orders": _parse_orders,
    "processes": int,
    "reps": int,
    "length": int,
    "burn_in": int,
    "sigma2": float,
    "seed": int,
    "learning_rate": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_epsilon": float,
    "reltol": float,
    "max_epochs": int,
    "bfgs_c1": float,
    "bfgs_c2": float,
    "bfgs_max_backtracks": int,
    "output_dir": Path,
    "workers": int,
}


def config_from_mapping(values: Dict[str, object], base: ExperimentConfig = None) -> ExperimentConfig:
    """Build a config from flat keys (see ``CONFIG_KEYS``) over ``base``."""
    base = base or ExperimentConfig()
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    v = dict(values)
    try:
        adam = AdamConfig(
            learning_rate=v.get("learning_rate", base.adam.learning_rate),
            betas=(v.get("adam_beta1", base.adam.betas[0]), v.get("adam_beta2", base.adam.betas[1])),
            epsilon=v.get("adam_epsilon", base.adam.epsilon),
        )
        bfgs = BfgsConfig(c1=v.get("bfgs_c1", base.bfgs.c1), c2=v.get("bfgs_c2", base.bfgs.c2),
                          max_backtracks=v.get("bfgs_max_backtracks", base.bfgs.max_backtracks))
        stopping = StoppingCriterion(reltol=v.get("reltol", base.stopping.reltol),
                                     max_epochs=v.get("max_epochs", base.stopping.max_epochs))
        return ExperimentConfig(
            orders=tuple(v.get("orders", base.orders)),
            n_processes=v.get("processes", base.n_processes),
            n_repetitions=v.get("reps", base.n_repetitions),
            raw_length=v.get("length", base.raw_length),
            burn_in=v.get("burn_in", base.burn_in),
            sigma2=v.get("sigma2", base.sigma2),
            seed=v.get("seed", base.seed),
            adam=adam, bfgs=bfgs, stopping=stopping,
            output_dir=Path(v.get("output_dir", base.output_dir)),
            workers=v.get("workers", base.workers),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key = value`` lines (``#`` comments) into typed values."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[bench]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    out = {}
    for key, raw in parser["bench"].items():
        key = key.strip().replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        try:
            out[key] = CONFIG_KEYS[key](raw.strip())
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return out


def load_config(path, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return config_from_mapping(values)


# -- running -------------------------------------------------------------------

def run_series(config: ExperimentConfig, order: int, process_index: int, repetition: int) -> ExperimentRecord:
    """Simulate one series and fit all three estimators to it, sequentially."""
    item = simulate_one(config.plan(order), process_index, repetition)
    x = item.series.values
    yw = estimate_yw(x, order)
    gd = estimate_gd(x, order, config.adam, config.stopping)
    cml = estimate_cml(x, order, config.bfgs, config.stopping)
    truth = item.process.coefficients
    return ExperimentRecord(
        series_id=item.series_id,
        order=order,
        seed=config.seed,
        process_index=process_index,
        repetition=repetition,
        sigma2=float(config.sigma2),
        true_coeffs=tuple(float(c) for c in truth),
        true_max_abs_inv_root=characteristic_roots(truth).max_abs_inverse_root,
        r2_truth=safe_r_squared(truth),
        yw=MethodRecord.from_result(yw),
        gd=MethodRecord.from_result(gd),
        cml=MethodRecord.from_result(cml),
    )


def _run_task(args):
    return run_series(*args)


def experiment_tasks(config: ExperimentConfig):
    return [(config, p, i, j) for p in config.orders for i, j in plan_keys(config.plan(p))]


def run_records(config: ExperimentConfig) -> List[ExperimentRecord]:
    tasks = experiment_tasks(config)
    if config.workers == 1:
        return [_run_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (config.workers * 8))
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        # map preserves submission order, so rows come out in series-id order
        return list(pool.map(_run_task, tasks, chunksize=chunk))


# -- summary -------------------------------------------------------------------

@dataclass
class Summary:
    text: str
    tables: Dict[str, Table]
    mse_agreement: Optional[BlandAltman]
    perplexity_agreement: Optional[BlandAltman]


def _absolute_roots(coeffs) -> str:
    roots = characteristic_roots(np.asarray(coeffs)).absolute_roots
    return "(" + ", ".join(f"{r:.2f}" for r in roots) + ")"


def _coeff_text(coeffs) -> str:
    return "(" + ", ".join(f"{c:.2f}" for c in coeffs) + ")"


def outlier_forensics(records: Sequence[ExperimentRecord], agreement: Optional[BlandAltman]) -> Table:
    """Truth, YW, GD and CML coefficients with absolute characteristic roots
    (2 decimals) for every Bland-Altman outlier series."""
    table = Table("outliers", ["series_id", "p", "method", "absolute_roots", "coefficients"])
    if agreement is None or not agreement.outlier_ids:
        return table
    by_id = {r.series_id: r for r in records}
    for sid in agreement.outlier_ids:
        r = by_id[sid]
        for label, coeffs in (("Process", r.true_coeffs), ("YW", r.yw.coeffs),
                              ("NN", r.gd.coeffs), ("CML", r.cml.coeffs)):
            table.rows.append([sid, r.order, label, _absolute_roots(coeffs), _coeff_text(coeffs)])
    return table


def _agreement(comparisons, attr) -> Optional[BlandAltman]:
    pairs = [(c.series_id, getattr(c, attr)) for c in comparisons
             if c.both_converged and getattr(c, attr) is not None and math.isfinite(getattr(c, attr))]
    if len(pairs) < 2:
        return None
    ids, diffs = zip(*pairs)
    return bland_altman(diffs, ids=list(ids))


def summarize(records: Sequence[ExperimentRecord]) -> Summary:
    """All aggregate tables; a pure function of the records."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarise")
    comparisons = [r.comparison() for r in records]
    both = [c for c in comparisons if c.both_converged]
    success = success_table(records)
    scaling = order_scaling_summary(comparisons)
    roots = root_proximity_summary(comparisons)
    mse_ba = _agreement(comparisons, "delta_mse")
    perp_ba = _agreement(comparisons, "delta_perplexity")

    agreement = Table("bland_altman", ["metric", "n", "mean_diff", "sd_diff", "lower", "upper", "n_outliers"])
    for name, ba in (("delta_mse", mse_ba), ("delta_perplexity", perp_ba)):
        if ba is not None:
            agreement.rows.append(ba.to_row(name))
    outliers = outlier_forensics(records, mse_ba)

    headline = Table("headline", ["statistic", "n", "q25", "median", "q75", "mean"])
    headline.rows.append(["time_ratio_cml_over_gd"] + quantile_summary(c.time_ratio for c in both))
    headline.rows.append(["delta_mse_cml_minus_gd"] + quantile_summary(c.delta_mse for c in both))
    headline.rows.append(["delta_perplexity_cml_minus_gd"] + quantile_summary(c.delta_perplexity for c in both))
    headline.rows.append(["abs_delta_mse"] + quantile_summary(abs(c.delta_mse) for c in both))
    headline.rows.append(["abs_delta_relerr_coef"] + quantile_summary(
        abs(float(v)) for c in both for v in c.relative_error_differences))
    n_undefined = sum(int(np.isnan(c.relative_errors_gd).sum()) for c in comparisons)

    parts = [
        f"series: {len(records)}  both converged: {len(both)}  "
        f"undefined relative errors (zero true coefficient): {n_undefined}\n",
        "== convergence by order ==\n" + format_success_table(success),
        "== headline (both converged) ==\n" + headline.to_text(),
        "== Bland-Altman agreement (CML - GD) ==\n" + agreement.to_text(),
        "== outlier forensics (MSE Bland-Altman) ==\n"
        + (outliers.to_text() if outliers.rows else "no outliers\n"),
        "== root proximity: YW max |inverse root| by CML status ==\n" + roots.to_text(),
        "== order scaling ==\n" + scaling.to_text(),
    ]
    tables = {t.name: t for t in (success, headline, agreement, outliers, roots, scaling)}
    return Summary("\n".join(parts), tables, mse_ba, perp_ba)


def write_summary(summary: Summary, output_dir) -> None:
    out = Path(output_dir)
    _atomic_write(out / "summary.txt", summary.text)
    for name, table in summary.tables.items():
        _atomic_write(out / f"summary_{name}.csv", table.to_csv())


def run_experiment(config: ExperimentConfig) -> Tuple[Path, Summary]:
    """Run the full plan; write ``results.csv`` and summary files atomically."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_records(config)
    path = out / "results.csv"
    write_results(records, path)
    summary = summarize(records)
    write_summary(summary, out)
    return path, summary

"""Sampling stationary AR processes and generating Gaussian AR series.

Seeding
-------
Every random stream comes from a Philox (counter-based) bit generator keyed
by ``SeedSequence(seed, spawn_key=...)``:

* process ``i`` of order ``p``: ``spawn_key = (0, p, i)``
* repetition ``j`` of that process: ``spawn_key = (1, p, i, j)``

so any single series can be regenerated without running the others.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.signal import lfilter

from .core import ArProcess, InnovationSpec, dl_forward

__all__ = [
    "TimeSeries",
    "SimulationPlan",
    "SimulatedSeries",
    "make_rng",
    "process_rng",
    "series_rng",
    "pacf_beta_parameters",
    "sample_pacf",
    "sample_stationary_process",
    "generate_series",
    "series_id",
    "simulate_one",
    "run_plan",
    "write_series_csv",
]

_PROCESS_STREAM = 0
_SERIES_STREAM = 1


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    process: Optional[ArProcess] = None
    seed: Optional[int] = None

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("a time series needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("time series values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SimulationPlan:
    order: int
    n_processes: int = 50
    n_repetitions: int = 5
    raw_length: int = 1500
    burn_in: int = 500
    sigma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("order", "n_processes", "n_repetitions", "raw_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.raw_length <= self.burn_in:
            raise ValueError("raw_length must exceed burn_in")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimulatedSeries:
    series_id: str
    order: int
    process_index: int
    repetition: int
    process: ArProcess
    series: TimeSeries


def make_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def process_rng(seed: int, order: int, process_index: int) -> np.random.Generator:
    return make_rng(seed, _PROCESS_STREAM, order, process_index)


def series_rng(seed: int, order: int, process_index: int, repetition: int) -> np.random.Generator:
    return make_rng(seed, _SERIES_STREAM, order, process_index, repetition)


def pacf_beta_parameters(order: int, integer_part: bool = False):
    """Beta shape parameters for lags ``1..order``.

    The default uses ``((k+1)/2, k/2 + 1)`` as written. With
    ``integer_part=True`` both arguments are floored, which is the variant
    whose image is exactly uniform over the stationary region.
    """
    k = np.arange(1, order + 1, dtype=float)
    a, b = (k + 1) / 2, k / 2
    if integer_part:
        a, b = np.floor(a), np.floor(b)
    return a, b + 1


def sample_pacf(order: int, rng: np.random.Generator, integer_part: bool = False) -> np.ndarray:
    a, b = pacf_beta_parameters(order, integer_part)
    u = rng.beta(a, b)
    s = 2.0 * u - 1.0
    # a Beta draw can round to exactly 0 or 1
    return np.clip(s, -np.nextafter(1.0, 0.0), np.nextafter(1.0, 0.0))


def sample_stationary_process(order: int, rng: np.random.Generator, sigma2: float = 1.0,
                              integer_part: bool = False) -> ArProcess:
    if order < 1:
        raise ValueError("order must be >= 1")
    coeffs = dl_forward(sample_pacf(order, rng, integer_part))
    return ArProcess(coeffs, InnovationSpec(0.0, sigma2))


def generate_series(process: ArProcess, raw_length: int, burn_in: int,
                    rng: np.random.Generator) -> TimeSeries:
    """Simulate ``raw_length`` points from zero initial values and drop the
    first ``burn_in``."""
    if not isinstance(process, ArProcess):
        # validates stationarity
        process = ArProcess(process)
    if raw_length <= burn_in or burn_in < 0:
        raise ValueError("raw_length must exceed burn_in >= 0")
    eps = process.innovation.mean + np.sqrt(process.sigma2) * rng.standard_normal(raw_length)
    x = lfilter([1.0], np.concatenate(([1.0], -process.coefficients)), eps)
    return TimeSeries(x[burn_in:], process=process)


def series_id(order: int, process_index: int, repetition: int) -> str:
    return f"p{order}-{process_index:05d}-{repetition:03d}"


def simulate_one(plan: SimulationPlan, process_index: int, repetition: int) -> SimulatedSeries:
    process = sample_stationary_process(
        plan.order, process_rng(plan.seed, plan.order, process_index), plan.sigma2)
    rng = series_rng(plan.seed, plan.order, process_index, repetition)
    ts = generate_series(process, plan.raw_length, plan.burn_in, rng)
    ts = TimeSeries(ts.values, process=process, seed=plan.seed)
    return SimulatedSeries(series_id(plan.order, process_index, repetition), plan.order,
                           process_index, repetition, process, ts)


def plan_keys(plan: SimulationPlan):
    return [(i, j) for i in range(plan.n_processes) for j in range(plan.n_repetitions)]


def run_plan(plan: SimulationPlan) -> Iterator[SimulatedSeries]:
    """Yield every (process, repetition) series of the plan in index order."""
    for i in range(plan.n_processes):
        process = sample_stationary_process(
            plan.order, process_rng(plan.seed, plan.order, i), plan.sigma2)
        for j in range(plan.n_repetitions):
            ts = generate_series(process, plan.raw_length, plan.burn_in,
                                 series_rng(plan.seed, plan.order, i, j))
            yield SimulatedSeries(series_id(plan.order, i, j), plan.order, i, j, process,
                                  TimeSeries(ts.values, process=process, seed=plan.seed))


def format_float(x: float) -> str:
    return repr(float(x))


def format_vector(values) -> str:
    return ";".join(format_float(v) for v in values)


def write_series_csv(items, fh) -> None:
    """Dump series as long-format CSV
    ``series_id,order,process_coeffs,value_index,value``."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["series_id", "order", "process_coeffs", "value_index", "value"])
    for item in items:
        coeffs = format_vector(item.process.coefficients)
        for t, v in enumerate(item.series.values):
            writer.writerow([item.series_id, item.order, coeffs, t, format_float(v)])


def series_csv_text(items) -> str:
    buf = io.StringIO()
    write_series_csv(items, buf)
    return buf.getvalue()

"""Yule-Walker, gradient-descent and conditional-ML estimators for AR(p).

All three share the Yule-Walker starting point. The series is used as given
(no intercept, no re-centring); only the sample acf centres internally.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import levinson_durbin, max_abs_inverse_root, sample_acf
from .objectives import PACF_CLAMP, LaggedDesign, conditional_nll, inverse_transform, make_objective, mse_cost, transform
from .optimize import (AdamConfig, BfgsConfig, FailureReason, OptimRun, StoppingCriterion,
                       adam_minimize, bfgs_minimize)

__all__ = [
    "METHODS",
    "EstimationResult",
    "estimate_yw",
    "estimate_gd",
    "estimate_cml",
    "estimate",
]

METHODS = ("yw", "gd", "cml")


@dataclass(frozen=True)
class EstimationResult:
    method: str
    coefficients: np.ndarray
    pacf: np.ndarray
    converged: bool
    failure_reason: Optional[FailureReason]
    epochs: int
    wall_time_ns: int
    final_mse: float
    final_perplexity: float
    max_abs_inverse_root: float
    initial_mse: float = float("nan")


def _values(series):
    return np.asarray(getattr(series, "values", series), dtype=float)


def _yule_walker(x, order):
    acf = sample_acf(x, order)
    coeffs, pacf, _ = levinson_durbin(acf, order)
    return coeffs, pacf


def _finish(method, design, coeffs, pacf, converged, reason, epochs, wall, initial_mse=float("nan")):
    return EstimationResult(
        method=method,
        coefficients=coeffs,
        pacf=pacf,
        converged=converged,
        failure_reason=reason,
        epochs=epochs,
        wall_time_ns=wall,
        final_mse=mse_cost(design, coeffs),
        final_perplexity=conditional_nll(design, coeffs),
        max_abs_inverse_root=max_abs_inverse_root(coeffs),
        initial_mse=initial_mse,
    )


def estimate_yw(series, order: int) -> EstimationResult:
    """Yule-Walker fit via Levinson-Durbin on the biased sample acf."""
    x = _values(series)
    if x.size <= order + 1:
        raise ValueError(f"series of length {x.size} is too short for order {order}")
    start = time.perf_counter_ns()
    coeffs, pacf = _yule_walker(x, order)
    wall = time.perf_counter_ns() - start
    design = LaggedDesign(x, order)
    return _finish("yw", design, coeffs, pacf, True, None, 0, wall)


def _iterative(method, series, order, run_optimizer, objective):
    x = _values(series)
    if x.size <= order + 1:
        raise ValueError(f"series of length {x.size} is too short for order {order}")
    start = time.perf_counter_ns()
    yw_coeffs, _ = _yule_walker(x, order)
    w0 = transform(yw_coeffs)
    design = LaggedDesign(x, order)
    run: OptimRun = run_optimizer(make_objective(design, order, objective), w0)
    coeffs = inverse_transform(run.final_weights)
    wall = time.perf_counter_ns() - start
    pacf = np.clip(np.tanh(run.final_weights), -PACF_CLAMP, PACF_CLAMP)
    return _finish(method, design, coeffs, pacf, run.converged, run.failure_reason,
                   run.epochs_used, wall, initial_mse=mse_cost(design, inverse_transform(w0)))


def estimate_gd(series, order: int, config: AdamConfig = AdamConfig(),
                criterion: StoppingCriterion = StoppingCriterion()) -> EstimationResult:
    """Adam on the MSE cost in unconstrained weight space, started at the
    transformed Yule-Walker estimate."""
    return _iterative("gd", series, order,
                      lambda f, w0: adam_minimize(f, w0, config, criterion), "mse")


def estimate_cml(series, order: int, config: BfgsConfig = BfgsConfig(),
                 criterion: StoppingCriterion = StoppingCriterion()) -> EstimationResult:
    """BFGS on the conditional negative log-likelihood, same start and
    reparameterisation. On failure the best iterate is kept and flagged."""
    return _iterative("cml", series, order,
                      lambda f, w0: bfgs_minimize(f, w0, config, criterion), "nll")


def estimate(method: str, series, order: int, adam: AdamConfig = AdamConfig(),
             bfgs: BfgsConfig = BfgsConfig(), criterion: StoppingCriterion = StoppingCriterion()):
    if method == "yw":
        return estimate_yw(series, order)
    if method == "gd":
        return estimate_gd(series, order, adam, criterion)
    if method == "cml":
        return estimate_cml(series, order, bfgs, criterion)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

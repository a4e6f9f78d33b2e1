"""Full-batch Adam and dense BFGS sharing one relative-tolerance stopping rule.

Both optimizers take ``evaluate(w) -> (cost, gradient)`` and return an
:class:`OptimRun`. Failures are data: they come back flagged, never raised.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

__all__ = [
    "FailureReason",
    "StoppingCriterion",
    "AdamConfig",
    "BfgsConfig",
    "OptimRun",
    "should_stop",
    "adam_minimize",
    "bfgs_minimize",
    "wolfe_line_search",
]

Evaluate = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class FailureReason(str, enum.Enum):
    NON_FINITE_VALUE = "non_finite_value"
    LINE_SEARCH_FAILURE = "line_search_failure"
    MAX_EPOCHS = "max_epochs"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class StoppingCriterion:
    reltol: float = 1e-6
    max_epochs: int = 10_000

    def __post_init__(self):
        if not self.reltol > 0:
            raise ValueError("reltol must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.05
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    keep_best: bool = True

    method = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class BfgsConfig:
    c1: float = 1e-4
    c2: float = 0.9
    max_backtracks: int = 30

    method = "bfgs"

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("line search needs 0 < c1 < c2 < 1")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


@dataclass
class OptimRun:
    final_weights: np.ndarray
    converged: bool
    failure_reason: Optional[FailureReason]
    epochs_used: int
    final_cost: float
    wall_time_ns: int
    cost_trace: list = field(default_factory=list, repr=False)


def should_stop(prev_cost: float, curr_cost: float, criterion: StoppingCriterion = StoppingCriterion()) -> bool:
    """``|C_t - C_{t-1}| < reltol * (|C_{t-1}| + reltol)``."""
    tol = criterion.reltol
    return abs(curr_cost - prev_cost) < tol * (abs(prev_cost) + tol)


def _finite(cost, grad) -> bool:
    return math.isfinite(cost) and bool(np.all(np.isfinite(grad)))


def adam_minimize(evaluate: Evaluate, w0, config: AdamConfig = AdamConfig(),
                  criterion: StoppingCriterion = StoppingCriterion(), trace: bool = False) -> OptimRun:
    """Full-batch Adam: one cost/gradient evaluation per epoch."""
    w = np.array(w0, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("initial weights must be finite")
    b1, b2 = config.betas
    lr, eps = config.learning_rate, config.epsilon
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    prev = None
    costs = []
    last_w, last_cost = w.copy(), math.nan
    reason = FailureReason.MAX_EPOCHS
    epoch = 0
    start = time.perf_counter_ns()
    for epoch in range(1, criterion.max_epochs + 1):
        cost, grad = evaluate(w)
        if not _finite(cost, grad):
            reason = FailureReason.NON_FINITE_VALUE
            break
        if not (config.keep_best and cost > last_cost):
            last_w, last_cost = w.copy(), cost
        if trace:
            costs.append(cost)
        if prev is not None and should_stop(prev, cost, criterion):
            reason = None
            break
        prev = cost
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** epoch)
        v_hat = v / (1.0 - b2 ** epoch)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    elapsed = time.perf_counter_ns() - start
    return OptimRun(final_weights=last_w, converged=reason is None, failure_reason=reason,
                    epochs_used=epoch, final_cost=last_cost, wall_time_ns=elapsed, cost_trace=costs)


class _NonFinite(Exception):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def wolfe_line_search(evaluate: Evaluate, w, f0, g0, direction, c1=1e-4, c2=0.9, max_iter=30,
                      step0=1.0):
    """Strong-Wolfe line search (bracketing then zoom) starting at ``step0``.

    Returns ``(step, f, g)`` or ``None`` when no acceptable point is found.
    Raises ``_NonFinite`` when a probe returns a non-finite value.
    """
    dphi0 = float(np.dot(g0, direction))

    def phi(a):
        f, g = evaluate(w + a * direction)
        if not _finite(f, g):
            raise _NonFinite()
        return f, g, float(np.dot(g, direction))

    def zoom(lo, hi, n_left):
        a_lo, f_lo, g_lo, d_lo = lo
        a_hi, f_hi, _, d_hi = hi
        for _ in range(n_left):
            a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            lo_b, hi_b = min(a_lo, a_hi), max(a_lo, a_hi)
            width = hi_b - lo_b
            if a is None or not (lo_b + 0.1 * width <= a <= hi_b - 0.1 * width):
                a = 0.5 * (a_lo + a_hi)
            f, g, d = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                a_hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * dphi0:
                    return a, f, g
                if d * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, g_lo, d_lo = a, f, g, d
        return None

    a_prev, f_prev, g_prev, d_prev = 0.0, f0, g0, dphi0
    a = step0
    for i in range(max_iter):
        f, g, d = phi(a)
        if f > f0 + c1 * a * dphi0 or (i > 0 and f >= f_prev):
            return zoom((a_prev, f_prev, g_prev, d_prev), (a, f, g, d), max_iter - i - 1)
        if abs(d) <= -c2 * dphi0:
            return a, f, g
        if d >= 0:
            return zoom((a, f, g, d), (a_prev, f_prev, g_prev, d_prev), max_iter - i - 1)
        a_prev, f_prev, g_prev, d_prev = a, f, g, d
        a *= 2.0
    return None


def bfgs_minimize(evaluate: Evaluate, w0, config: BfgsConfig = BfgsConfig(),
                  criterion: StoppingCriterion = StoppingCriterion(), trace: bool = False) -> OptimRun:
    """Dense BFGS with a strong-Wolfe line search and identity initial
    inverse Hessian. An epoch is one accepted outer iteration."""
    w = np.array(w0, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("initial weights must be finite")
    n = w.size
    start = time.perf_counter_ns()
    f, g = evaluate(w)
    costs = [f] if trace else []
    if not _finite(f, g):
        return OptimRun(w, False, FailureReason.NON_FINITE_VALUE, 0, f,
                        time.perf_counter_ns() - start, costs)
    eye = np.eye(n)
    H = eye.copy()
    # pretend the previous cost was f + |g|/2 so the first trial step is ~1/|g|
    f_old = f + float(np.linalg.norm(g)) / 2.0
    reason = FailureReason.MAX_EPOCHS
    epoch = 0
    while epoch < criterion.max_epochs:
        if not np.any(g):
            reason = None
            break
        d = -H @ g
        if np.dot(d, g) >= 0:
            H = eye.copy()
            d = -g
        # initial trial step from the last decrease, capped at the full quasi-Newton step
        dphi0 = float(np.dot(g, d))
        step0 = min(1.0, 2.02 * (f - f_old) / dphi0)
        if not step0 > 0:
            step0 = 1.0
        try:
            found = wolfe_line_search(evaluate, w, f, g, d, config.c1, config.c2, config.max_backtracks,
                                      step0)
        except _NonFinite:
            reason = FailureReason.NON_FINITE_VALUE
            break
        if found is None:
            reason = FailureReason.LINE_SEARCH_FAILURE
            break
        step, f_new, g_new = found
        epoch += 1
        s = step * d
        y = g_new - g
        w, f_prev, f, g = w + s, f, f_new, g_new
        f_old = f_prev
        if trace:
            costs.append(f)
        if should_stop(f_prev, f, criterion):
            reason = None
            break
        sy = float(np.dot(s, y))
        if sy > 0:
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
    elapsed = time.perf_counter_ns() - start
    return OptimRun(final_weights=w, converged=reason is None, failure_reason=reason,
                    epochs_used=epoch, final_cost=f, wall_time_ns=elapsed, cost_trace=costs)

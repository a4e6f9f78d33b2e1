"""Cost functions for AR fitting and their gradients in unconstrained space.

Weights ``w`` map to coefficients through ``alpha = DL(tanh(w))``; the reverse
pass below accumulates ``dC/dw`` back through that recursion by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import dl_forward, dl_inverse

__all__ = [
    "PACF_CLAMP",
    "OBJECTIVES",
    "CostEvaluation",
    "LaggedDesign",
    "transform",
    "inverse_transform",
    "dl_forward_history",
    "dl_backward",
    "predict",
    "residual_sse",
    "mse_cost",
    "conditional_nll",
    "cost_and_gradient",
    "make_objective",
]

# |s_k| is held below this before arctanh and after tanh.
PACF_CLAMP = 1.0 - 1e-12

OBJECTIVES = ("mse", "nll")


@dataclass(frozen=True)
class CostEvaluation:
    cost: float
    gradient: np.ndarray
    residual_sse: float


class LaggedDesign:
    """Sliding-window inputs ``[x_{t-1}, ..., x_{t-p}]`` and targets ``x_t``
    for ``t = p+1..T``."""

    def __init__(self, series, order: int):
        x = np.asarray(getattr(series, "values", series), dtype=float)
        if order < 1:
            raise ValueError("order must be >= 1")
        if x.size <= order:
            raise ValueError(f"series of length {x.size} is too short for order {order}")
        T = x.size
        self.order = order
        self.length = T
        self.targets = x[order:]
        self.inputs = np.column_stack([x[order - 1 - i:T - 1 - i] for i in range(order)])

    @property
    def n_terms(self) -> int:
        return self.targets.size

    def predict(self, coefficients) -> np.ndarray:
        return self.inputs @ np.asarray(coefficients, dtype=float)

    def residuals(self, coefficients) -> np.ndarray:
        return self.targets - self.predict(coefficients)


def _design(series, order) -> LaggedDesign:
    if isinstance(series, LaggedDesign):
        if series.order != order:
            raise ValueError("design order does not match coefficients")
        return series
    return LaggedDesign(series, order)


def transform(coefficients) -> np.ndarray:
    """``w = arctanh(DL^-1(alpha))`` with the pacf clamped inside (-1, 1)."""
    s = dl_inverse(coefficients).values
    return np.arctanh(np.clip(s, -PACF_CLAMP, PACF_CLAMP))


def _squash(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return np.clip(np.tanh(w), -PACF_CLAMP, PACF_CLAMP)


def inverse_transform(weights) -> np.ndarray:
    """``alpha = DL(tanh(w))``; stationary for every finite ``w``."""
    return dl_forward(_squash(weights))


def dl_forward_history(s):
    """Forward recursion keeping every intermediate coefficient vector."""
    rows = []
    alpha = np.zeros(0)
    for sk in s:
        alpha = np.concatenate((alpha - sk * alpha[::-1], [sk]))
        rows.append(alpha)
    return rows


def dl_backward(s, rows, grad_alpha) -> np.ndarray:
    """Pull ``dC/dalpha_p`` back to ``dC/ds`` through the recursion."""
    p = len(s)
    abar = np.array(grad_alpha, dtype=float)
    sbar = np.zeros(p)
    for k in range(p - 1, 0, -1):
        prev = rows[k - 1]
        head = abar[:k]
        sbar[k] = abar[k] - np.dot(head, prev[::-1])
        abar = head - s[k] * head[::-1]
    sbar[0] = abar[0]
    return sbar


def predict(series, coefficients) -> np.ndarray:
    coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    return _design(series, coeffs.size).predict(coeffs)


def residual_sse(series, coefficients) -> float:
    coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    r = _design(series, coeffs.size).residuals(coeffs)
    return float(np.dot(r, r))


def _mse_denominator(design: LaggedDesign) -> int:
    denom = design.length - design.order - 1
    if denom < 1:
        raise ValueError(f"series of length {design.length} is too short for order {design.order}")
    return denom


def mse_cost(series, coefficients) -> float:
    """Sum of squared one-step residuals over ``T - p - 1``."""
    coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    design = _design(series, coeffs.size)
    r = design.residuals(coeffs)
    return float(np.dot(r, r)) / _mse_denominator(design)


def _nll_from_sse(sse: float, n: int) -> float:
    if sse <= 0.0:
        return -math.inf
    return 0.5 * n * math.log(2.0 * math.pi * sse / n) + 0.5 * n


def conditional_nll(series, coefficients) -> float:
    """Gaussian conditional negative log-likelihood (perplexity) with the
    innovation variance profiled out.

    Returns ``-inf`` when the residual sum of squares is exactly zero.
    """
    coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    design = _design(series, coeffs.size)
    r = design.residuals(coeffs)
    return _nll_from_sse(float(np.dot(r, r)), design.n_terms)


def cost_and_gradient(series, weights, objective: str = "mse") -> CostEvaluation:
    """Cost at ``inverse_transform(w)`` and its exact gradient in ``w``."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    design = _design(series, w.size)
    s = _squash(w)
    rows = dl_forward_history(s)
    alpha = rows[-1]
    r = design.residuals(alpha)
    sse = float(np.dot(r, r))
    dsse = -2.0 * (design.inputs.T @ r)
    if objective == "mse":
        denom = _mse_denominator(design)
        cost = sse / denom
        grad_alpha = dsse / denom
    else:
        n = design.n_terms
        cost = _nll_from_sse(sse, n)
        grad_alpha = dsse * (0.5 * n / sse) if sse > 0 else np.full(w.size, np.nan)
    grad_s = dl_backward(s, rows, grad_alpha)
    t = np.tanh(w)
    grad_w = grad_s * (1.0 - t * t)
    if not (math.isfinite(cost) and np.all(np.isfinite(grad_w))):
        raise FloatingPointError(f"non-finite cost or gradient at w={w}")
    return CostEvaluation(cost=cost, gradient=grad_w, residual_sse=sse)


def make_objective(series, order: int, objective: str = "mse") -> Callable:
    """Bind a series once and return ``w -> (cost, gradient)`` for the
    optimizers. Non-finite values are passed through, not raised."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    design = _design(series, order)

    def evaluate(w):
        if not np.all(np.isfinite(w)):
            return math.nan, np.full(order, np.nan)
        try:
            ev = cost_and_gradient(design, w, objective)
        except FloatingPointError:
            return math.nan, np.full(order, np.nan)
        return ev.cost, ev.gradient

    return evaluate

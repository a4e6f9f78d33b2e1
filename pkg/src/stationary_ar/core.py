"""AR(p) domain types and the exact recursions linking coefficients,
partial autocorrelations, characteristic roots and second-order moments.

Conventions
-----------
The model is ``x_t = sum_i alpha_i x_{t-i} + eps_t``. Inverse roots are the
zeros of ``z^p - alpha_1 z^{p-1} - ... - alpha_p``; the process is stationary
iff all of them lie strictly inside the unit circle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "STATIONARITY_MARGIN",
    "NonStationaryError",
    "QuadratureError",
    "InnovationSpec",
    "ArProcess",
    "Pacf",
    "RootSet",
    "Acf",
    "dl_forward",
    "dl_inverse",
    "dl_inverse_batch",
    "levinson_durbin",
    "characteristic_roots",
    "max_abs_inverse_root",
    "is_stationary",
    "spectral_variance",
    "theoretical_variance",
    "r_squared",
    "sample_acf",
]

# Inverse-root modulus must stay below 1 - margin to count as stationary.
STATIONARITY_MARGIN = 1e-8


class NonStationaryError(ValueError):
    """Raised when coefficients or partial autocorrelations leave the
    stationary region."""


class QuadratureError(ArithmeticError):
    """Raised when the spectral variance integral fails to converge."""

    def __init__(self, message, estimate, rel_change, n_nodes):
        super().__init__(message)
        self.estimate = estimate
        self.rel_change = rel_change
        self.n_nodes = n_nodes


def _as_vector(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class InnovationSpec:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"innovation variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class ArProcess:
    """A stationary Gaussian AR(p) process.

    Construction validates stationarity through the partial autocorrelation
    route, so an ``ArProcess`` instance is always a valid model.
    """

    coefficients: np.ndarray
    innovation: InnovationSpec = field(default_factory=InnovationSpec)

    def __post_init__(self):
        coeffs = _as_vector(self.coefficients).copy()
        if coeffs.size < 1:
            raise ValueError("an AR process needs at least one coefficient")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        # raises NonStationaryError
        dl_inverse(coeffs)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        return int(self.coefficients.size)

    @property
    def sigma2(self) -> float:
        return self.innovation.variance


@dataclass(frozen=True)
class Pacf:
    values: np.ndarray

    def __post_init__(self):
        vals = _as_vector(self.values).copy()
        if not np.all(np.abs(vals) < 1.0):
            raise NonStationaryError(f"partial autocorrelations must satisfy |s_k| < 1, got {vals}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class RootSet:
    inverse_roots: np.ndarray
    max_abs_inverse_root: float

    @property
    def stationary(self) -> bool:
        return self.max_abs_inverse_root < 1.0 - STATIONARITY_MARGIN

    @property
    def absolute_roots(self) -> np.ndarray:
        """Moduli of the characteristic roots (reciprocals), largest first."""
        with np.errstate(divide="ignore"):
            return np.sort(1.0 / np.abs(self.inverse_roots))[::-1]


@dataclass(frozen=True)
class Acf:
    lags: np.ndarray

    def __getitem__(self, k):
        return self.lags[k]

    def __len__(self):
        return self.lags.size


def dl_forward(pacf) -> np.ndarray:
    """Map partial autocorrelations to AR coefficients (Durbin-Levinson).

    Parameters
    ----------
    pacf : Pacf or array_like
        Values ``s_1..s_p`` with every ``|s_k| < 1``. A 2-d array is treated
        as a stack of independent vectors (lags along the last axis).

    Returns
    -------
    ndarray
        Coefficients ``alpha_{p,1..p}``, same shape as the input.
    """
    if isinstance(pacf, Pacf):
        s = pacf.values
    else:
        s = np.asarray(pacf, dtype=float)
        if s.ndim == 0:
            s = s.reshape(1)
    if not np.all(np.abs(s) < 1.0):
        raise NonStationaryError(f"partial autocorrelations must satisfy |s_k| < 1, got {s}")
    if s.ndim == 1:
        # plain floats beat numpy on the short vectors used here
        a = []
        for sk in s.tolist():
            a = [x - sk * y for x, y in zip(a, a[::-1])]
            a.append(sk)
        return np.array(a)
    p = s.shape[-1]
    alpha = np.zeros(s.shape)
    for k in range(p):
        sk = s[..., k:k + 1]
        prev = alpha[..., :k].copy()
        alpha[..., :k] = prev - sk * prev[..., ::-1]
        alpha[..., k] = s[..., k]
    return alpha


def _dl_down(coefficients):
    a = np.asarray(coefficients, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim == 1:
        return _dl_down_vector(a)
    p = a.shape[-1]
    s = np.zeros(a.shape)
    for k in range(p - 1, -1, -1):
        akk = a[..., k]
        if not np.all(np.abs(akk) < 1.0):
            raise NonStationaryError(
                f"coefficients {np.asarray(coefficients)} are not stationary "
                f"(partial autocorrelation at lag {k + 1} reaches {np.max(np.abs(akk))})"
            )
        s[..., k] = akk
        head = a[..., :k]
        akk = akk[..., None]
        a = (head + akk * head[..., ::-1]) / ((1.0 - akk) * (1.0 + akk))
    return s


def _dl_down_vector(coefficients):
    a = coefficients.tolist()
    s = [0.0] * len(a)
    for k in range(len(a) - 1, -1, -1):
        akk = a[k]
        if not abs(akk) < 1.0:
            raise NonStationaryError(
                f"coefficients {coefficients} are not stationary "
                f"(partial autocorrelation at lag {k + 1} is {akk})"
            )
        s[k] = akk
        d = (1.0 - akk) * (1.0 + akk)
        head = a[:k]
        a = [(x + akk * y) / d for x, y in zip(head, head[::-1])]
    return np.array(s)


def dl_inverse(coefficients) -> Pacf:
    """Recover the partial autocorrelations of a stationary AR model by
    running the Durbin-Levinson recursion downwards.

    Raises
    ------
    NonStationaryError
        If some intermediate ``|alpha_{k,k}| >= 1``.
    """
    return Pacf(_dl_down(coefficients))


def dl_inverse_batch(coefficients) -> np.ndarray:
    """:func:`dl_inverse` over a stack of coefficient vectors (last axis)."""
    return _dl_down(coefficients)


def levinson_durbin(acf, order: int):
    """Solve the Yule-Walker system for ``order`` from autocorrelations.

    Parameters
    ----------
    acf : Acf or array_like
        ``rho_0..rho_K`` with ``K >= order``; ``rho_0`` is used as the scale.
    order : int

    Returns
    -------
    coefficients : ndarray
    pacf : ndarray
    prediction_error : ndarray
        Normalised one-step error variance after each order, length
        ``order + 1``.
    """
    r = acf.lags if isinstance(acf, Acf) else _as_vector(acf)
    if r.size <= order:
        raise ValueError(f"need at least {order + 1} autocorrelation lags, got {r.size}")
    alpha = np.zeros(order)
    pacf = np.zeros(order)
    err = np.empty(order + 1)
    err[0] = r[0]
    for k in range(order):
        num = r[k + 1] - np.dot(alpha[:k], r[k:0:-1])
        sk = num / err[k]
        prev = alpha[:k].copy()
        alpha[:k] = prev - sk * prev[::-1]
        alpha[k] = sk
        pacf[k] = sk
        err[k + 1] = err[k] * (1.0 - sk * sk)
    return alpha, pacf, err


def characteristic_roots(process) -> RootSet:
    """Inverse characteristic roots of an AR process or coefficient vector."""
    coeffs = process.coefficients if isinstance(process, ArProcess) else _as_vector(process)
    if coeffs.size < 1:
        raise ValueError("order must be at least 1")
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("coefficients must be finite")
    # eigenvalues of the companion matrix are the inverse roots
    p = coeffs.size
    companion = np.zeros((p, p))
    companion[0] = coeffs
    companion[np.arange(1, p), np.arange(p - 1)] = 1.0
    roots = np.linalg.eigvals(companion).astype(complex)
    return RootSet(inverse_roots=roots, max_abs_inverse_root=float(np.max(np.abs(roots))))


def max_abs_inverse_root(coefficients) -> float:
    return characteristic_roots(coefficients).max_abs_inverse_root


def is_stationary(coefficients, margin: float = STATIONARITY_MARGIN) -> bool:
    coeffs = _as_vector(coefficients)
    if coeffs.size == 0:
        return True
    if not np.all(np.isfinite(coeffs)):
        return False
    return max_abs_inverse_root(coeffs) < 1.0 - margin


def _spectral_integrand(coeffs, omega):
    k = np.arange(1, coeffs.size + 1)
    transfer = 1.0 - np.exp(-2j * np.pi * np.outer(omega, k)) @ coeffs
    return 1.0 / (transfer.real ** 2 + transfer.imag ** 2)


def spectral_variance(coefficients, sigma2=1.0, rtol=1e-10, max_nodes=2 ** 20):
    """Process variance from the power spectrum by refined trapezoid rule.

    The integrand is smooth and 1-periodic, so the trapezoid rule on
    ``[0, 1/2]`` converges geometrically; the grid is doubled until the
    relative change drops below ``rtol``.

    Returns
    -------
    value : float
    rel_change : float
        Relative change at the last refinement (achieved accuracy).
    n_nodes : int
    """
    coeffs = _as_vector(coefficients)
    if coeffs.size == 0 or not np.any(coeffs):
        return float(sigma2), 0.0, 1
    n = 16
    omega = np.linspace(0.0, 0.5, n + 1)
    f = _spectral_integrand(coeffs, omega)
    total = f[0] / 2 + f[1:-1].sum() + f[-1] / 2
    integral = total / n * 0.5
    rel = math.inf
    while n < max_nodes:
        mid = (np.arange(n) + 0.5) * (0.5 / n)
        total += _spectral_integrand(coeffs, mid).sum()
        n *= 2
        new = total / n * 0.5
        rel = abs(new - integral) / abs(new)
        integral = new
        if rel < rtol:
            return float(sigma2 * 2.0 * integral), rel, n + 1
    raise QuadratureError(
        f"spectral variance did not converge (relative change {rel:.3g} at {n + 1} nodes)",
        estimate=float(sigma2 * 2.0 * integral),
        rel_change=rel,
        n_nodes=n + 1,
    )


def theoretical_variance(process) -> float:
    if not isinstance(process, ArProcess):
        process = ArProcess(process)
    value, _, _ = spectral_variance(process.coefficients, process.sigma2)
    return value


def r_squared(process) -> float:
    """``1 - sigma2 / var(X_t)``; depends on the coefficients only."""
    if not isinstance(process, ArProcess):
        process = ArProcess(process)
    return 1.0 - process.sigma2 / theoretical_variance(process)


def sample_acf(series, max_lag: int) -> Acf:
    """Biased (divide-by-T) sample autocorrelations of the centred series."""
    x = _as_vector(getattr(series, "values", series))
    n = x.size
    if not 0 <= max_lag < n:
        raise ValueError(f"max_lag must be in [0, {n - 1}], got {max_lag}")
    xc = x - x.mean()
    c0 = np.dot(xc, xc) / n
    if not c0 > 0:
        raise ValueError("sample acf undefined for a constant series")
    lags = np.empty(max_lag + 1)
    lags[0] = 1.0
    for k in range(1, max_lag + 1):
        lags[k] = np.dot(xc[k:], xc[:-k]) / n / c0
    return Acf(lags)

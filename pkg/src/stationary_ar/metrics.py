"""Evaluation statistics: relative error, paired differences, Bland-Altman
limits, success tables and per-order summaries."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .core import QuadratureError, r_squared

__all__ = [
    "UNDEFINED_TRUTH_THRESHOLD",
    "Table",
    "PairedComparison",
    "BlandAltman",
    "relative_error",
    "safe_r_squared",
    "paired_comparison",
    "compare_pair",
    "bland_altman",
    "success_table",
    "quantile_summary",
    "order_scaling_summary",
    "root_proximity_summary",
]

# Relative error is undefined (NaN) where |truth| falls below this.
UNDEFINED_TRUTH_THRESHOLD = 1e-8

QUANTILES = (0.25, 0.5, 0.75)


@dataclass
class Table:
    """A small named table rendered as aligned text or CSV."""

    name: str
    columns: List[str]
    rows: List[list] = field(default_factory=list)

    @staticmethod
    def _cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return format(value, ".6g")
        return str(value)

    def to_text(self) -> str:
        cells = [self.columns] + [[self._cell(v) for v in row] for row in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([repr(v) if isinstance(v, float) else self._cell(v) for v in row])
        return buf.getvalue()


def relative_error(truth, estimate) -> np.ndarray:
    """``|(truth - estimate) / truth|`` per coefficient; NaN marks entries
    whose true value is (numerically) zero."""
    t = np.atleast_1d(np.asarray(truth, dtype=float))
    e = np.atleast_1d(np.asarray(estimate, dtype=float))
    if t.shape != e.shape:
        raise ValueError(f"length mismatch: truth {t.size}, estimate {e.size}")
    out = np.full(t.shape, np.nan)
    ok = np.abs(t) >= UNDEFINED_TRUTH_THRESHOLD
    out[ok] = np.abs((t[ok] - e[ok]) / t[ok])
    return out


def safe_r_squared(coefficients) -> float:
    try:
        return r_squared(np.asarray(coefficients, dtype=float))
    except (QuadratureError, ValueError):
        return math.nan


@dataclass(frozen=True)
class PairedComparison:
    series_id: str
    order: int
    relative_errors_gd: np.ndarray
    relative_errors_cml: np.ndarray
    delta_mse: Optional[float]
    delta_perplexity: Optional[float]
    time_ratio: Optional[float]
    r2_truth: float
    r2_gd: float
    r2_cml: float
    gd_converged: bool
    cml_converged: bool
    yw_max_abs_inverse_root: float = math.nan
    gd_max_abs_inverse_root: float = math.nan
    cml_max_abs_inverse_root: float = math.nan

    @property
    def both_converged(self) -> bool:
        return self.gd_converged and self.cml_converged

    @property
    def relative_error_differences(self) -> np.ndarray:
        """Per-coefficient (CML - GD) relative-error differences."""
        return self.relative_errors_cml - self.relative_errors_gd


def paired_comparison(series_id, order, truth, gd_coeffs, cml_coeffs, *, gd_mse, cml_mse,
                      gd_perplexity, cml_perplexity, gd_time_ns, cml_time_ns, gd_converged,
                      cml_converged, r2_truth=None, r2_gd=None, r2_cml=None,
                      yw_root=math.nan, gd_root=math.nan, cml_root=math.nan) -> PairedComparison:
    both = gd_converged and cml_converged
    ratio = None
    if gd_time_ns and cml_time_ns and gd_time_ns > 0 and cml_time_ns > 0:
        ratio = cml_time_ns / gd_time_ns
    return PairedComparison(
        series_id=series_id,
        order=int(order),
        relative_errors_gd=relative_error(truth, gd_coeffs),
        relative_errors_cml=relative_error(truth, cml_coeffs),
        delta_mse=(cml_mse - gd_mse) if both else None,
        delta_perplexity=(cml_perplexity - gd_perplexity) if both else None,
        time_ratio=ratio,
        r2_truth=safe_r_squared(truth) if r2_truth is None else r2_truth,
        r2_gd=safe_r_squared(gd_coeffs) if r2_gd is None else r2_gd,
        r2_cml=safe_r_squared(cml_coeffs) if r2_cml is None else r2_cml,
        gd_converged=bool(gd_converged),
        cml_converged=bool(cml_converged),
        yw_max_abs_inverse_root=yw_root,
        gd_max_abs_inverse_root=gd_root,
        cml_max_abs_inverse_root=cml_root,
    )


def compare_pair(series, truth, gd, cml, series_id: str = "", yw=None) -> PairedComparison:
    """Pair GD and CML results fitted to the same series against the truth."""
    truth_coeffs = getattr(truth, "coefficients", truth)
    return paired_comparison(
        series_id, len(np.atleast_1d(truth_coeffs)), truth_coeffs, gd.coefficients, cml.coefficients,
        gd_mse=gd.final_mse, cml_mse=cml.final_mse,
        gd_perplexity=gd.final_perplexity, cml_perplexity=cml.final_perplexity,
        gd_time_ns=gd.wall_time_ns, cml_time_ns=cml.wall_time_ns,
        gd_converged=gd.converged, cml_converged=cml.converged,
        yw_root=yw.max_abs_inverse_root if yw is not None else math.nan,
        gd_root=gd.max_abs_inverse_root, cml_root=cml.max_abs_inverse_root,
    )


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    sd_diff: float
    limits: tuple
    outlier_ids: list
    n: int

    def to_row(self, name):
        return [name, self.n, self.mean_diff, self.sd_diff, self.limits[0], self.limits[1],
                len(self.outlier_ids)]


def bland_altman(diffs, ids: Optional[Sequence] = None, z: float = 1.96) -> BlandAltman:
    """Mean difference, sample SD and ``mean +/- z*SD`` agreement limits.

    Outliers are the points strictly outside the limits, reported by ``ids``
    (positional indices when ``ids`` is omitted).
    """
    d = np.asarray(diffs, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("Bland-Altman analysis needs at least two differences")
    if not np.all(np.isfinite(d)):
        raise ValueError("differences must be finite")
    if ids is None:
        ids = list(range(d.size))
    elif len(ids) != d.size:
        raise ValueError("ids and diffs differ in length")
    n = d.size
    mean = math.fsum(d) / n
    sd = math.sqrt(math.fsum((d - mean) ** 2) / (n - 1))
    lo, hi = mean - z * sd, mean + z * sd
    outliers = [ids[i] for i in np.flatnonzero((d < lo) | (d > hi))]
    return BlandAltman(mean, sd, (lo, hi), outliers, n)


def _pct(k, n):
    return 100.0 * k / n if n else math.nan


def success_table(records: Iterable) -> Table:
    """Per-order success/failure counts for CML and GD, plus a total row.

    ``records`` need ``order``, ``gd_converged`` and ``cml_converged``.
    """
    counts = {}
    for r in records:
        c = counts.setdefault(int(r.order), [0, 0, 0])
        c[0] += 1
        c[1] += bool(r.cml_converged)
        c[2] += bool(r.gd_converged)
    table = Table("success", ["p", "cml_success", "cml_success_pct", "cml_failure", "cml_failure_pct",
                              "gd_success", "gd_success_pct", "gd_failure", "gd_failure_pct", "n"])
    totals = [0, 0, 0]
    for order in sorted(counts):
        n, cml_ok, gd_ok = counts[order]
        totals = [a + b for a, b in zip(totals, counts[order])]
        table.rows.append([order, cml_ok, _pct(cml_ok, n), n - cml_ok, _pct(n - cml_ok, n),
                           gd_ok, _pct(gd_ok, n), n - gd_ok, _pct(n - gd_ok, n), n])
    n, cml_ok, gd_ok = totals
    table.rows.append(["total", cml_ok, _pct(cml_ok, n), n - cml_ok, _pct(n - cml_ok, n),
                       gd_ok, _pct(gd_ok, n), n - gd_ok, _pct(n - gd_ok, n), n])
    return table


def format_success_table(table: Table) -> str:
    """Render a success table in the layout of the classic CML/NN count table."""
    head = ["p", "CML #Success", "CML #Failure", "NN #Success", "NN #Failure"]
    rows = []
    for r in table.rows:
        rows.append([str(r[0]).capitalize(), f"{r[1]} ({r[2]:.0f}%)", f"{r[3]} ({r[4]:.0f}%)",
                     f"{r[5]}", f"{r[7]}"])
    return Table("success", head, rows).to_text()


def quantile_summary(values) -> List:
    """``[n, q25, median, q75, mean]`` of the finite values (NaNs when empty)."""
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return [0, math.nan, math.nan, math.nan, math.nan]
    q = np.quantile(np.sort(v), QUANTILES)
    return [int(v.size), float(q[0]), float(q[1]), float(q[2]), math.fsum(v) / v.size]


def _status(c: PairedComparison) -> str:
    return "success" if c.cml_converged else "failure"


def order_scaling_summary(comparisons: Iterable[PairedComparison]) -> Table:
    """Per order and CML status: quartiles of the CML/GD time ratio, the
    R-squared difference (CML - GD) and the relative-error difference
    (CML - GD), the latter both pooled per coefficient and as per-series
    means."""
    comparisons = list(comparisons)
    if not comparisons:
        raise ValueError("order_scaling_summary needs at least one comparison")
    table = Table("order_scaling", ["p", "cml_status", "metric", "n", "q25", "median", "q75", "mean"])
    groups = {}
    for c in comparisons:
        groups.setdefault((c.order, _status(c)), []).append(c)
        groups.setdefault((c.order, "all"), []).append(c)
    status_rank = {"success": 0, "failure": 1, "all": 2}
    for order, status in sorted(groups, key=lambda k: (k[0], status_rank[k[1]])):
        group = groups[(order, status)]
        metrics = {
            "time_ratio": [c.time_ratio for c in group],
            "delta_r2": [c.r2_cml - c.r2_gd for c in group],
            "delta_relerr_coef": [float(v) for c in group for v in c.relative_error_differences],
            "delta_relerr_series_mean": [_nanmean(c.relative_error_differences) for c in group],
            "delta_mse": [c.delta_mse for c in group],
            "delta_perplexity": [c.delta_perplexity for c in group],
        }
        for name, values in metrics.items():
            table.rows.append([order, status, name] + quantile_summary(values))
    return table


def _nanmean(v) -> float:
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    return math.fsum(v) / v.size if v.size else math.nan


def root_proximity_summary(comparisons: Iterable[PairedComparison]) -> Table:
    """Distribution of the Yule-Walker max |inverse root| by order and CML
    status."""
    table = Table("root_proximity", ["p", "cml_status", "n", "q25", "median", "q75", "mean"])
    groups = {}
    for c in comparisons:
        groups.setdefault((c.order, _status(c)), []).append(c.yw_max_abs_inverse_root)
    for order, status in sorted(groups, key=lambda k: (k[0], k[1] != "success")):
        table.rows.append([order, status] + quantile_summary(groups[(order, status)]))
    return table

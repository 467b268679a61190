"""Central finite-difference oracle for verifying analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError


@dataclass
class GradReport:
    """Worst-coordinate comparison between analytic and numeric gradients."""

    max_rel_error: float
    argmax_index: int
    analytic: float
    numeric: float
    tolerance: float
    passed: bool
    n_checked: int
    n_skipped: int

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max_rel_error={self.max_rel_error:.3e} at coord {self.argmax_index} "
            f"(analytic={self.analytic:.6e}, numeric={self.numeric:.6e}, "
            f"tol={self.tolerance:.1e}, checked={self.n_checked}, skipped={self.n_skipped})"
        )


def central_difference(scalar_fn: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate."""
    x = np.asarray(params, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("central_difference expects a flat parameter vector")
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (scalar_fn(x + step) - scalar_fn(x - step)) / (2.0 * h)
    return grad


def relative_errors(analytic, numeric) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-8), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise DimensionError("gradient shapes disagree")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return np.abs(a - n) / denom


def check(
    scalar_fn: Callable[[np.ndarray], float],
    analytic_grad,
    params,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    skip_mask=None,
) -> GradReport:
    """Compare an analytic gradient against central differences.

    ``skip_mask`` marks coordinates to exclude, used for coordinates within
    2h of a hinge activation or an angular segment boundary where finite
    differences are invalid.
    """
    x = np.asarray(params, dtype=np.float64)
    a = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if a.shape != x.shape:
        raise DimensionError("analytic gradient must match the parameter vector")
    numeric = central_difference(scalar_fn, x, h=h)
    errs = relative_errors(a, numeric)
    if skip_mask is not None:
        skip = np.asarray(skip_mask, dtype=bool).ravel()
        if skip.shape != x.shape:
            raise DimensionError("skip_mask must match the parameter vector")
    else:
        skip = np.zeros(x.shape, dtype=bool)
    kept = ~skip
    n_checked = int(kept.sum())
    if n_checked == 0:
        return GradReport(0.0, -1, 0.0, 0.0, tolerance, True, 0, int(skip.sum()))
    masked = np.where(kept, errs, -np.inf)
    idx = int(np.argmax(masked))
    worst = float(errs[idx])
    return GradReport(
        max_rel_error=worst,
        argmax_index=idx,
        analytic=float(a[idx]),
        numeric=float(numeric[idx]),
        tolerance=tolerance,
        passed=bool(worst < tolerance),
        n_checked=n_checked,
        n_skipped=int(skip.sum()),
    )

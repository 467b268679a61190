"""Dense float64 containers and the numeric kernels shared by every loss.

All numeric data in this library flows through plain float64 ndarrays: a
``DenseVector`` is a 1-D array, a ``DenseMatrix`` a row-major 2-D array.
The helpers here validate shape and finiteness at construction boundaries
so the hot loss/gradient paths can assume clean inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, DomainError, ParameterError

DenseVector = np.ndarray
DenseMatrix = np.ndarray

# Angular margins above the tested range are rejected (losses) or clamped
# (margins derived from uncertainty); this also bounds the degree of the
# Chebyshev polynomials used for cos(m*alpha).
M_MAX = 6


def as_vector(data, name: str = "vector") -> DenseVector:
    """Coerce ``data`` to a finite 1-D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(data, name: str = "matrix") -> DenseMatrix:
    """Coerce ``data`` to a finite row-major 2-D float64 array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def dot(a, b) -> float:
    """Inner product of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot requires equal-length vectors, got {a.shape} and {b.shape}")
    return float(np.dot(a, b))


def erf(x: float) -> float:
    """Gauss error function.

    Delegates to the platform libm implementation, which is correctly
    rounded and therefore well within the 1e-12 absolute error budget the
    misclassification probabilities require.
    """
    return math.erf(x)


def chebyshev_t(x: float, m: int) -> tuple[float, float]:
    """First-kind Chebyshev polynomial T_m(x) and its derivative T_m'(x).

    Uses the three-term recurrence T_0 = 1, T_1 = x,
    T_m = 2 x T_{m-1} - T_{m-2}, differentiated alongside.
    """
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= M_MAX:
        raise ParameterError(f"m must be an integer in [1, {M_MAX}], got {m!r}")
    t_prev, t_cur = 1.0, float(x)
    d_prev, d_cur = 0.0, 1.0
    for _ in range(m - 1):
        t_next = 2.0 * x * t_cur - t_prev
        d_next = 2.0 * t_cur + 2.0 * x * d_cur - d_prev
        t_prev, t_cur = t_cur, t_next
        d_prev, d_cur = d_cur, d_next
    return t_cur, d_cur


def cos_m_theta(cos_alpha: float, m: int) -> float:
    """cos(m * arccos(cos_alpha)) evaluated as the Chebyshev polynomial T_m.

    Polynomial evaluation keeps the expression differentiable in
    ``cos_alpha`` everywhere, unlike the arccos route.
    """
    if not -1.0 <= cos_alpha <= 1.0:
        raise DomainError(f"cos_alpha must lie in [-1, 1], got {cos_alpha!r}")
    value, _ = chebyshev_t(float(cos_alpha), m)
    return value


def stable_log_sum_exp(values) -> float:
    """log(sum(exp(v_i))) with max-subtraction so large logits never overflow."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError("stable_log_sum_exp requires a nonempty 1-D input")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def log_sum_exp_rows(values: DenseMatrix) -> DenseVector:
    """Row-wise stable log-sum-exp for batched logits."""
    m = np.max(values, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(values - m), axis=1, keepdims=True)))[:, 0]

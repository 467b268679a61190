"""Softmax-family losses with angular margins and exact analytic gradients.

The classifier is a bias-free linear layer whose rows act as
class-representative vectors. Every loss returns the scalar value together
with the gradients for the weight rows and for the input feature, so the
losses can sit on top of any feature extractor.

The margin losses replace the true-class logit ``w_y . f`` with
``||w_y|| ||f|| psi(alpha_y)`` where ``psi`` is a piecewise angular
transform built from cos(m*alpha); cos(m*alpha) itself is evaluated as a
Chebyshev polynomial in cos(alpha) so the whole expression stays
differentiable in both ``w`` and ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateNormError,
    DimensionError,
    DomainError,
    LabelError,
    ParameterError,
)
from .numerics import (
    M_MAX,
    DenseMatrix,
    DenseVector,
    as_matrix,
    as_vector,
    chebyshev_t,
    cos_m_theta,
    stable_log_sum_exp,
)

# Keep cos(alpha) strictly inside (-1, 1); at the poles the angular
# factorization has unbounded derivatives.
_COS_CLIP = 1.0 - 1e-12
# Norms below this signal degenerate training and raise instead of being
# silently floored.
NORM_FLOOR = 1e-10

ANGULAR_VARIANT_I_DEFAULT_A = 2.0
ANGULAR_VARIANT_II_DEFAULT_A = 3.0


@dataclass
class ClassifierState:
    """Class-representative vectors with per-class margins and uncertainties.

    weights: (C, d) matrix, row j is the representative vector of class j.
    margins: per-class integer margins in [1, M_MAX].
    class_uncertainty: per-class nonnegative uncertainty scalars.
    """

    weights: DenseMatrix
    margins: np.ndarray | None = None
    class_uncertainty: np.ndarray | None = None

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        c = self.weights.shape[0]
        if c < 2:
            raise DimensionError("a classifier needs at least two classes")
        if self.margins is None:
            self.margins = np.ones(c, dtype=np.int64)
        else:
            self.margins = np.asarray(self.margins, dtype=np.int64)
            if self.margins.shape != (c,):
                raise DimensionError("margins must have one entry per class")
            if np.any(self.margins < 1) or np.any(self.margins > M_MAX):
                raise ParameterError(f"margins must lie in [1, {M_MAX}]")
        if self.class_uncertainty is None:
            self.class_uncertainty = np.zeros(c, dtype=np.float64)
        else:
            self.class_uncertainty = as_vector(self.class_uncertainty, "class_uncertainty")
            if self.class_uncertainty.shape != (c,):
                raise DimensionError("class_uncertainty must have one entry per class")
            if np.any(self.class_uncertainty < 0):
                raise ParameterError("class_uncertainty must be nonnegative")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def clone(self) -> "ClassifierState":
        return ClassifierState(
            self.weights.copy(), self.margins.copy(), self.class_uncertainty.copy()
        )


@dataclass
class LossResult:
    """Loss value with gradients for the classifier weights and the feature."""

    value: float
    grad_weights: DenseMatrix
    grad_feature: DenseVector


def _check_instance(state: ClassifierState, f, y: int) -> DenseVector:
    f = as_vector(f, "feature")
    if f.shape[0] != state.feature_dim:
        raise DimensionError(
            f"feature dimension {f.shape[0]} does not match classifier dimension {state.feature_dim}"
        )
    if not 0 <= y < state.n_classes:
        raise LabelError(f"label {y} out of range for {state.n_classes} classes")
    return f


def softmax_loss(state: ClassifierState, f, y: int) -> LossResult:
    """Cross-entropy of the bias-free softmax over the logits ``w_j . f``."""
    f = _check_instance(state, f, y)
    w = state.weights
    logits = w @ f
    lse = stable_log_sum_exp(logits)
    value = lse - logits[y]
    p = np.exp(logits - lse)
    resid = p.copy()
    resid[y] -= 1.0
    grad_w = np.outer(resid, f)
    grad_f = w.T @ resid
    return LossResult(float(value), grad_w, grad_f)


def psi(alpha: float, m: int) -> float:
    """Piecewise angular margin transform (-1)^r cos(m*alpha) - 2r.

    ``r = floor(m*alpha/pi)`` indexes the monotone segment; at alpha = pi it
    is clamped to m-1 so the endpoint stays inside the last segment. For
    m = 1 this is exactly cos(alpha).
    """
    if not 0.0 <= alpha <= math.pi:
        raise DomainError(f"alpha must lie in [0, pi], got {alpha!r}")
    r = min(int(m * alpha / math.pi), m - 1)
    sign = -1.0 if r % 2 else 1.0
    return sign * cos_m_theta(math.cos(alpha), m) - 2.0 * r


def class_margin_from_uncertainty(u: float) -> int:
    """Integer margin max(1, floor(0.5 u)), clamped to M_MAX."""
    if not math.isfinite(u) or u < 0:
        raise ParameterError(f"uncertainty must be finite and nonnegative, got {u!r}")
    return min(max(1, int(math.floor(0.5 * u))), M_MAX)


def _margin_transform(m: int, weight: float) -> Callable[[float], tuple[float, float]]:
    """psi as a function of c = cos(alpha), returning (value, d/dc)."""

    def transform(c: float) -> tuple[float, float]:
        alpha = math.acos(c)
        r = min(int(m * alpha / math.pi), m - 1)
        sign = -1.0 if r % 2 else 1.0
        t_val, t_der = chebyshev_t(c, m)
        return weight * (sign * t_val - 2.0 * r), weight * sign * t_der

    return transform


def _transformed_true_class_loss(
    state: ClassifierState, f, y: int, transform: Callable[[float], tuple[float, float]]
) -> LossResult:
    """Softmax loss where the true-class logit is ||w_y|| ||f|| T(cos alpha_y).

    ``transform`` maps the clamped cosine to (T(c), T'(c)). Rival logits stay
    the plain dot products, since ||w_j|| ||f|| cos(alpha_j) = w_j . f.
    """
    f = _check_instance(state, f, y)
    w = state.weights
    norms = np.linalg.norm(w, axis=1)
    b = float(np.linalg.norm(f))
    if b < NORM_FLOOR:
        raise DegenerateNormError("feature norm is numerically zero")
    if np.any(norms < NORM_FLOOR):
        j = int(np.argmin(norms))
        raise DegenerateNormError(f"weight row {j} has numerically zero norm")
    a = float(norms[y])

    logits = w @ f
    c_raw = float(logits[y]) / (a * b)
    clipped = abs(c_raw) > _COS_CLIP
    c = min(max(c_raw, -_COS_CLIP), _COS_CLIP)
    t_val, t_der = transform(c)

    z_true = a * b * t_val
    mod_logits = logits.copy()
    mod_logits[y] = z_true
    lse = stable_log_sum_exp(mod_logits)
    value = lse - z_true
    p = np.exp(mod_logits - lse)

    grad_w = np.outer(p, f)  # rival rows: p_j * f; true row replaced below
    grad_f = w.T @ p - p[y] * w[y]

    resid = p[y] - 1.0
    wy = w[y]
    dz_dwy = (b * t_val / a) * wy
    dz_df = (a * t_val / b) * f
    if not clipped:
        # c = (w_y . f) / (||w_y|| ||f||); outside the clip band treat c as
        # constant, matching the flat clamped region.
        dc_dwy = f / (a * b) - (c / (a * a)) * wy
        dc_df = wy / (a * b) - (c / (b * b)) * f
        dz_dwy = dz_dwy + (a * b * t_der) * dc_dwy
        dz_df = dz_df + (a * b * t_der) * dc_df
    grad_w[y] = resid * dz_dwy
    grad_f = grad_f + resid * dz_df
    return LossResult(float(value), grad_w, grad_f)


def large_margin_softmax_loss(state: ClassifierState, f, y: int, m: int) -> LossResult:
    """Margin-enforcing softmax: the true class must win by the angular factor m."""
    return _transformed_true_class_loss(state, f, y, _margin_transform(_check_margin(m), 1.0))


def uncertainty_weighted_margin_loss(
    state: ClassifierState, f, y: int, m: int, ccdf: float
) -> LossResult:
    """Margin softmax with the true-class term scaled by a misclassification probability.

    ``ccdf`` is the sample's probability of being misclassified under its
    Gaussian feature model; it multiplies the full bracketed transform
    (including the -2r offset) and is treated as a constant for gradients.
    At ccdf = 1 this is exactly ``large_margin_softmax_loss``.
    """
    if not 0.0 <= ccdf <= 1.0:
        raise ParameterError(f"ccdf must lie in [0, 1], got {ccdf!r}")
    return _transformed_true_class_loss(
        state, f, y, _margin_transform(_check_margin(m), float(ccdf))
    )


def _check_margin(m: int) -> int:
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= M_MAX:
        raise ParameterError(f"margin must be an integer in [1, {M_MAX}], got {m!r}")
    return int(m)


def angular_variant_i(cos_theta: float, a: float = ANGULAR_VARIANT_I_DEFAULT_A) -> float:
    """Rescaled cosine sqrt((1+a)/(a(1+(1-c^2)a))) * c; a = 2 tracks the
    normalized triangle wave in the angle."""
    _check_cos(cos_theta)
    if a <= 0:
        raise ParameterError(f"a must be positive, got {a!r}")
    c = float(cos_theta)
    return math.sqrt((1.0 + a) / (a * (1.0 + (1.0 - c * c) * a))) * c


def angular_variant_ii(cos_theta: float, a: float = ANGULAR_VARIANT_II_DEFAULT_A) -> float:
    """Half-angle remap -cos(a * sqrt((1+c)/2)); a = 3 emphasizes misaligned pairs."""
    _check_cos(cos_theta)
    if a <= 0:
        raise ParameterError(f"a must be positive, got {a!r}")
    c = float(cos_theta)
    return -math.cos(a * math.sqrt((1.0 + c) / 2.0))


def _check_cos(cos_theta: float) -> None:
    if not -1.0 <= cos_theta <= 1.0:
        raise DomainError(f"cos_theta must lie in [-1, 1], got {cos_theta!r}")


def _variant_transform(variant: str, a: float) -> Callable[[float], tuple[float, float]]:
    if variant == "i":

        def transform(c: float) -> tuple[float, float]:
            d = a * (1.0 + (1.0 - c * c) * a)
            k = math.sqrt((1.0 + a) / d)
            return k * c, k * (1.0 + a * a * c * c / d)

    elif variant == "ii":

        def transform(c: float) -> tuple[float, float]:
            u = math.sqrt((1.0 + c) / 2.0)  # >= sqrt(5e-13) after cos clipping
            return -math.cos(a * u), a * math.sin(a * u) / (4.0 * u)

    else:
        raise ParameterError(f"unknown angular variant {variant!r}")
    return transform


def angular_margin_loss(
    state: ClassifierState, f, y: int, variant: str = "i", a: float | None = None
) -> LossResult:
    """Softmax loss with the true-class cosine remapped by an angular variant."""
    if a is None:
        a = ANGULAR_VARIANT_I_DEFAULT_A if variant == "i" else ANGULAR_VARIANT_II_DEFAULT_A
    if a <= 0:
        raise ParameterError(f"a must be positive, got {a!r}")
    return _transformed_true_class_loss(state, f, y, _variant_transform(variant, float(a)))

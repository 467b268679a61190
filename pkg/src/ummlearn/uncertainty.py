"""Dropout-ensemble predictive moments and misclassification probabilities.

An N-member ensemble is formed by running the same network under N
independent Bernoulli keep-masks. The first moment of the stacked outputs
is the prediction; the second moment (plus the precision floor) is the
uncertainty. At the sample level, features are modeled as a diagonal
Gaussian whose moments feed a closed-form misclassification probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, LabelError, ParameterError
from .margin_loss import ClassifierState
from .numerics import DenseMatrix, DenseVector, as_matrix, as_vector, erf

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleConfig:
    """Monte-Carlo dropout ensemble parameters.

    dropout_rate is the keep-probability: each unit stays active with this
    probability and kept activations are scaled by its inverse, so the
    rate -> 1 limit is the deterministic network. precision is tau; its
    inverse is the variance floor added to every covariance estimate.
    """

    n_passes: int = 10
    dropout_rate: float = 0.5
    precision: float = 100.0

    def __post_init__(self):
        if self.n_passes < 1:
            raise ConfigurationError(f"n_passes must be positive, got {self.n_passes!r}")
        if not 0.0 < self.dropout_rate < 1.0:
            raise ConfigurationError(
                f"dropout_rate must lie in (0, 1), got {self.dropout_rate!r}"
            )
        if self.precision <= 0:
            raise ConfigurationError(f"precision must be positive, got {self.precision!r}")


@dataclass
class UncertaintyEstimate:
    """Predictive mean, covariance (with the tau^-1 I floor), and a scalar summary.

    The scalar is the covariance diagonal entry of the sample's true class
    when a label is supplied to ``mc_uncertainty``, otherwise the mean
    diagonal entry.
    """

    mean: DenseVector
    covariance: DenseMatrix
    scalar: float


def sample_dropout_masks(
    cfg: EnsembleConfig, layer_widths, rng_seed: int
) -> list[list[np.ndarray]]:
    """N independent mask collections, one 0/1 float vector per layer.

    Each unit is kept independently with probability ``cfg.dropout_rate``;
    the draw is fully determined by ``rng_seed``.
    """
    widths = [int(w) for w in layer_widths]
    if any(w <= 0 for w in widths):
        raise ParameterError(f"layer widths must be positive, got {widths!r}")
    rng = np.random.default_rng(rng_seed)
    p = cfg.dropout_rate
    return [
        [(rng.random(w) < p).astype(np.float64) for w in widths]
        for _ in range(cfg.n_passes)
    ]


def mc_mean(outputs) -> DenseVector:
    """Elementwise average of the N stacked ensemble outputs."""
    stack = as_matrix(outputs, "outputs")
    if stack.shape[0] == 0:
        raise DimensionError("mc_mean requires at least one ensemble output")
    return stack.mean(axis=0)


def mc_uncertainty(
    outputs, cfg: EnsembleConfig, true_class: int | None = None
) -> UncertaintyEstimate:
    """Second-moment covariance tau^-1 I + E[y y^T] - m m^T of the ensemble."""
    stack = as_matrix(outputs, "outputs")
    n = stack.shape[0]
    if n < 2:
        raise ConfigurationError("variance estimation needs at least two ensemble passes")
    mean = stack.mean(axis=0)
    second = stack.T @ stack / n
    cov = second - np.outer(mean, mean)
    cov += np.eye(stack.shape[1]) / cfg.precision
    diag = np.diag(cov)
    if true_class is None:
        scalar = float(diag.mean())
    else:
        if not 0 <= true_class < stack.shape[1]:
            raise LabelError(f"true_class {true_class} out of range")
        scalar = float(diag[true_class])
    return UncertaintyEstimate(mean=mean, covariance=cov, scalar=scalar)


def class_uncertainty(estimates, labels, n_classes: int | None = None) -> np.ndarray:
    """Per-class mean of each sample's own-class variance entry.

    Classes with no samples receive the global mean and are logged. Values
    are summed in sorted order so the result is independent of sample order.
    """
    labs = np.asarray(labels, dtype=np.int64)
    if labs.ndim != 1 or labs.shape[0] != len(estimates):
        raise DimensionError("labels must be 1-D with one entry per estimate")
    if n_classes is None:
        n_classes = estimates[0].covariance.shape[0]
    if labs.size and (labs.min() < 0 or labs.max() >= n_classes):
        raise LabelError("label out of range")
    own = np.array(
        [est.covariance[k, k] for est, k in zip(estimates, labs)], dtype=np.float64
    )
    global_mean = float(np.sort(own).mean()) if own.size else 0.0
    result = np.empty(n_classes, dtype=np.float64)
    for k in range(n_classes):
        vals = own[labs == k]
        if vals.size == 0:
            logger.warning("class %d has no samples; using the global mean uncertainty", k)
            result[k] = global_mean
        else:
            result[k] = np.sort(vals).mean()
    return result


def sample_feature_moments(feature_stack) -> tuple[DenseVector, DenseVector]:
    """Per-dimension mean and biased (1/N) variance of N stacked feature vectors."""
    stack = as_matrix(feature_stack, "feature_stack")
    if stack.shape[0] < 2:
        raise ConfigurationError("feature moments need at least two ensemble passes")
    mu = stack.mean(axis=0)
    sigma = np.mean((stack - mu) ** 2, axis=0)
    return mu, sigma


def error_moments(w_j, w_y, mu_f, sigma_f) -> tuple[float, float]:
    """Moments of the error variable (w_j - w_y) . f for a diagonal Gaussian f."""
    w_j = as_vector(w_j, "w_j")
    w_y = as_vector(w_y, "w_y")
    mu_f = as_vector(mu_f, "mu_f")
    sigma_f = as_vector(sigma_f, "sigma_f")
    if not w_j.shape == w_y.shape == mu_f.shape == sigma_f.shape:
        raise DimensionError("error_moments requires equal-dimension inputs")
    diff = w_j - w_y
    mu_e = float(diff @ mu_f)
    var_e = float(np.sum(diff * diff * sigma_f))
    return mu_e, var_e


def misclassification_ccdf(mu_e: float, var_e: float) -> float:
    """P(error > 0) = 0.5 (1 + erf(mu_E / sqrt(2 sigma_E^2))).

    A zero variance degenerates to the pointwise limit: a step at mu_E = 0
    with value 0.5 at the step itself.
    """
    if var_e < 0:
        raise ParameterError(f"variance must be nonnegative, got {var_e!r}")
    if var_e == 0.0:
        if mu_e > 0:
            return 1.0
        if mu_e < 0:
            return 0.0
        return 0.5
    return 0.5 * (1.0 + erf(mu_e / np.sqrt(2.0 * var_e)))


def rival_class(state: ClassifierState, mu_f, y: int) -> int:
    """Strongest rival argmax_{j != y} w_j . mu_f, ties broken by lowest index."""
    mu_f = as_vector(mu_f, "mu_f")
    if not 0 <= y < state.n_classes:
        raise LabelError(f"label {y} out of range")
    scores = state.weights @ mu_f
    scores[y] = -np.inf
    return int(np.argmax(scores))

"""Shared test utilities: oracles and random-instance factories."""

import math

import numpy as np

from ummlearn.margin_loss import ClassifierState


def spearman(a, b) -> float:
    """Rank correlation without ties handling (inputs are generic floats)."""
    ra = np.argsort(np.argsort(np.asarray(a))).astype(float)
    rb = np.argsort(np.argsort(np.asarray(b))).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra * rb).sum() / np.sqrt((ra * ra).sum() * (rb * rb).sum()))


def normal_cdf_simpson(x: float, lo: float = -12.0, n: int = 40001) -> float:
    """Standard normal CDF by Simpson integration of the density."""
    t = np.linspace(lo, x, n)
    pdf = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    h = (x - lo) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * np.sum(w * pdf))


def random_classifier_instance(rng, n_classes=4, dim=6, margin=None, away_from_psi_kinks=True):
    """Random (state, feature, label) kept in the finite-difference-friendly
    regime: moderate logits (no saturated coordinates below the noise floor),
    the true-class cosine away from the arccos poles, and, when a margin is
    given, the angle away from psi segment boundaries."""
    while True:
        state = ClassifierState(0.7 * rng.standard_normal((n_classes, dim)))
        f = rng.standard_normal(dim)
        y = int(rng.integers(0, n_classes))
        logits = state.weights @ f
        if np.max(logits) - np.min(logits) > 9.0:
            continue
        w_y = state.weights[y]
        cos = float(w_y @ f / (np.linalg.norm(w_y) * np.linalg.norm(f)))
        if abs(cos) > 0.9:
            continue
        if not away_from_psi_kinks or margin is None:
            return state, f, y
        alpha = math.acos(max(-1.0, min(1.0, cos)))
        dist = min(abs(alpha - r * math.pi / margin) for r in range(margin + 1))
        if dist > 1e-2:
            return state, f, y


def flatten_instance(state, f):
    return np.concatenate([state.weights.ravel(), f])


def loss_value_fn(loss_fn, n_classes, dim, y):
    """Wrap a LossResult-producing callable as value(params_flat)."""

    def value(x):
        state = ClassifierState(x[: n_classes * dim].reshape(n_classes, dim))
        return loss_fn(state, x[n_classes * dim :], y).value

    return value

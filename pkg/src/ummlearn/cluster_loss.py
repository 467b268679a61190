"""Hybrid clustering objective: margin-slack attraction to class centers,
hinge separation between centers, and a diversity regularizer that drives
the pairwise center distances toward their mean.

Centers are not trained by these gradients alone; ``update_centers`` applies
the damped per-class moving-average rule and is called once per batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, LabelError, ParameterError
from .numerics import DenseMatrix, as_matrix


@dataclass
class ClusterState:
    """Per-class centers plus the coupled margin geometry.

    gamma is the slack inside which a sample-to-center distance is free;
    lam is the required separation between centers; s couples them as
    gamma = lam / s (s > 2); alpha damps the center updates.
    """

    centers: DenseMatrix
    gamma: float = 2.5
    lam: float = 10.0
    s: float = 4.0
    alpha: float = 0.5

    def __post_init__(self):
        self.centers = as_matrix(self.centers, "centers")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma!r}")
        if self.lam <= 0:
            raise ParameterError(f"lam must be positive, got {self.lam!r}")
        if self.s <= 2:
            raise ParameterError(f"s must exceed 2, got {self.s!r}")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    @classmethod
    def coupled(cls, centers, lam: float = 10.0, s: float = 4.0, alpha: float = 0.5) -> "ClusterState":
        """Construct with gamma tied to the separation margin: gamma = lam / s."""
        if s <= 2:
            raise ParameterError(f"s must exceed 2, got {s!r}")
        return cls(centers=centers, gamma=lam / s, lam=lam, s=s, alpha=alpha)

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def clone(self) -> "ClusterState":
        return ClusterState(self.centers.copy(), self.gamma, self.lam, self.s, self.alpha)


def _check_batch(state: ClusterState, features, labels) -> tuple[np.ndarray, np.ndarray]:
    feats = as_matrix(features, "features")
    labs = np.asarray(labels, dtype=np.int64)
    if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
        raise DimensionError("labels must be 1-D with one entry per feature row")
    if feats.shape[1] != state.dim:
        raise DimensionError(
            f"feature dimension {feats.shape[1]} does not match center dimension {state.dim}"
        )
    if labs.size and (labs.min() < 0 or labs.max() >= state.n_classes):
        raise LabelError("label out of range for the configured centers")
    return feats, labs


def clustering_loss(state: ClusterState, features, labels) -> tuple[float, DenseMatrix]:
    """Hinge-slack attraction sum_i max(0, 0.5 ||r_i - c_{y_i}||^2 - gamma).

    Returns the value and the gradient w.r.t. each feature row; centers are
    treated as constants here.
    """
    feats, labs = _check_batch(state, features, labels)
    diff = feats - state.centers[labs]
    half_sq = 0.5 * np.sum(diff * diff, axis=1)
    active = half_sq > state.gamma
    value = float(np.sum(half_sq[active] - state.gamma))
    grad = np.where(active[:, None], diff, 0.0)
    return value, grad


def update_centers(state: ClusterState, features, labels) -> ClusterState:
    """Damped per-class center pull c_k <- c_k - alpha * delta_k.

    delta_k averages (c_k - r_i) over the class-k rows with a +1 damping
    term; classes absent from the batch are untouched. Class rows are summed
    in lexicographic order so batch shuffling cannot change the rounding.
    """
    feats, labs = _check_batch(state, features, labels)
    new_state = state.clone()
    centers = new_state.centers
    for k in range(state.n_classes):
        rows = feats[labs == k]
        n_k = rows.shape[0]
        if n_k == 0:
            continue
        order = np.lexsort(rows.T[::-1])
        row_sum = rows[order].sum(axis=0)
        delta = (n_k * centers[k] - row_sum) / (1.0 + n_k)
        centers[k] = centers[k] - state.alpha * delta
    return new_state


def _pairwise(state: ClusterState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if state.n_classes < 2:
        raise ConfigurationError("pairwise center losses need at least two centers")
    c = state.centers
    iu, ju = np.triu_indices(state.n_classes, k=1)
    d = np.linalg.norm(c[iu] - c[ju], axis=1)
    return iu, ju, d


def diversity_regularizer(state: ClusterState) -> tuple[float, DenseMatrix]:
    """Variance of the pairwise center distances, E[(d_jk - mu)^2] over j < k."""
    iu, ju, d = _pairwise(state)
    mu = float(d.mean())
    value = float(np.mean((d - mu) ** 2))
    grad = np.zeros_like(state.centers)
    n_pairs = d.size
    coeff = 2.0 / n_pairs * (d - mu)
    for p in range(n_pairs):
        if d[p] == 0.0:
            continue  # subgradient 0 at coincident centers
        unit = (state.centers[iu[p]] - state.centers[ju[p]]) / d[p]
        grad[iu[p]] += coeff[p] * unit
        grad[ju[p]] -= coeff[p] * unit
    return value, grad


def inter_class_margin_loss(state: ClusterState) -> tuple[float, DenseMatrix]:
    """Hinge separation sum_{j<k} max(0, lam - d(c_j, c_k)) plus the diversity term."""
    iu, ju, d = _pairwise(state)
    reg_value, grad = diversity_regularizer(state)
    grad = grad.copy()
    value = reg_value
    for p in range(d.size):
        gap = state.lam - d[p]
        if gap <= 0.0:
            continue
        value += gap
        if d[p] == 0.0:
            continue  # subgradient 0 at coincident centers
        unit = (state.centers[iu[p]] - state.centers[ju[p]]) / d[p]
        grad[iu[p]] -= unit
        grad[ju[p]] += unit
    return float(value), grad


def hybrid_loss(state: ClusterState, features, labels) -> tuple[float, DenseMatrix, DenseMatrix]:
    """Clustering attraction plus center separation, with both gradients."""
    cl_value, grad_features = clustering_loss(state, features, labels)
    mm_value, grad_centers = inter_class_margin_loss(state)
    return cl_value + mm_value, grad_features, grad_centers

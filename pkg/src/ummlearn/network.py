"""Small dense feed-forward classifier with dropout, manual backprop, and the
progressive three-phase trainer.

Architecture: input -> [linear + relu + dropout] per hidden layer -> bias-free
linear classifier whose rows are the class-representative vectors.

Training phases:
  1. plain softmax;
  2. class-level margins, derived at the phase boundary from a
     dropout-ensemble uncertainty estimate over the training set (only for
     the ``uncertainty-weighted`` selector);
  3. additionally, per-sample misclassification probabilities computed from
     ensemble feature moments re-weight the margin term each batch.

Selectors other than ``uncertainty-weighted`` use phase 1 for softmax
warm-up and keep their own loss through phases 2 and 3 (``hybrid-cluster``
initializes centers from per-class feature means at the phase boundary).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from .cluster_loss import ClusterState, hybrid_loss, update_centers
from .data import Dataset
from .errors import (
    ConfigurationError,
    DimensionError,
    MetricUndefinedError,
    TrainingDivergenceError,
)
from .margin_loss import (
    NORM_FLOOR,
    ClassifierState,
    angular_margin_loss,
    class_margin_from_uncertainty,
    large_margin_softmax_loss,
    softmax_loss,
    uncertainty_weighted_margin_loss,
)
from .numerics import M_MAX, log_sum_exp_rows
from .seeding import stream_rng
from .uncertainty import (
    EnsembleConfig,
    class_uncertainty,
    error_moments,
    mc_uncertainty,
    misclassification_ccdf,
    rival_class,
    sample_dropout_masks,
    sample_feature_moments,
)

LOSS_CHOICES = (
    "softmax",
    "large-margin",
    "uncertainty-weighted",
    "hybrid-cluster",
    "angular-i",
    "angular-ii",
)

PHASE_SOFTMAX = 1
PHASE_CLASS_MARGIN = 2
PHASE_SAMPLE_WEIGHT = 3


@dataclass
class MlpModel:
    """Hidden layers (with biases) plus the bias-free classifier head."""

    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    classifier: ClassifierState

    @classmethod
    def init(
        cls, input_dim: int, hidden_widths, n_classes: int, rng: np.random.Generator
    ) -> "MlpModel":
        """Fan-in-scaled uniform initialization, deterministic per generator."""
        widths = [int(w) for w in hidden_widths]
        if input_dim < 1 or n_classes < 2 or any(w < 1 for w in widths):
            raise ConfigurationError("invalid architecture sizes")
        weights, biases = [], []
        fan_in = input_dim
        for w in widths:
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(w, fan_in)))
            biases.append(np.zeros(w))
            fan_in = w
        bound = 1.0 / np.sqrt(fan_in)
        head = rng.uniform(-bound, bound, size=(n_classes, fan_in))
        return cls(weights, biases, ClassifierState(head))

    @property
    def layer_widths(self) -> list[int]:
        return [w.shape[0] for w in self.hidden_weights]

    @property
    def input_dim(self) -> int:
        if self.hidden_weights:
            return self.hidden_weights[0].shape[1]
        return self.classifier.feature_dim

    @property
    def feature_dim(self) -> int:
        return self.classifier.feature_dim

    @property
    def n_classes(self) -> int:
        return self.classifier.n_classes

    def clone(self) -> "MlpModel":
        return MlpModel(
            [w.copy() for w in self.hidden_weights],
            [b.copy() for b in self.hidden_biases],
            self.classifier.clone(),
        )


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: list[np.ndarray]
    act: list[np.ndarray]
    masks: list[np.ndarray] | None
    keep_prob: float
    feature: np.ndarray
    logits: np.ndarray
    single: bool


@dataclass
class Gradients:
    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    classifier_weights: np.ndarray


def forward(model: MlpModel, x, masks=None, keep_prob: float = 1.0) -> ForwardCache:
    """Run the network; with masks, inverted dropout scales kept units by 1/keep_prob."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.input_dim:
        raise DimensionError(
            f"input dimension {arr.shape} does not match model input {model.input_dim}"
        )
    if masks is not None and len(masks) != len(model.hidden_weights):
        raise DimensionError("one dropout mask per hidden layer is required")
    h = arr
    pre_list, act_list = [], []
    for layer, (w, b) in enumerate(zip(model.hidden_weights, model.hidden_biases)):
        pre = h @ w.T + b
        a = np.maximum(pre, 0.0)
        if masks is not None:
            a = a * (masks[layer] / keep_prob)
        pre_list.append(pre)
        act_list.append(a)
        h = a
    logits = h @ model.classifier.weights.T
    return ForwardCache(
        x=arr,
        pre=pre_list,
        act=act_list,
        masks=list(masks) if masks is not None else None,
        keep_prob=keep_prob,
        feature=h,
        logits=logits,
        single=single,
    )


def backward(model: MlpModel, cache: ForwardCache, grad_feature, grad_classifier=None) -> Gradients:
    """Exact reverse-mode gradients for the hidden stack.

    ``grad_feature`` is dLoss/d(penultimate feature), already carrying any
    batch averaging; ``grad_classifier`` is passed through untouched.
    """
    delta = np.asarray(grad_feature, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != cache.feature.shape:
        raise DimensionError("grad_feature must match the cached feature shape")
    n_hidden = len(model.hidden_weights)
    g_w = [None] * n_hidden
    g_b = [None] * n_hidden
    for layer in range(n_hidden - 1, -1, -1):
        if cache.masks is not None:
            delta = delta * (cache.masks[layer] / cache.keep_prob)
        delta = delta * (cache.pre[layer] > 0.0)
        inputs = cache.act[layer - 1] if layer > 0 else cache.x
        g_w[layer] = delta.T @ inputs
        g_b[layer] = delta.sum(axis=0)
        delta = delta @ model.hidden_weights[layer]
    if grad_classifier is None:
        grad_classifier = np.zeros_like(model.classifier.weights)
    return Gradients(hidden_weights=g_w, hidden_biases=g_b, classifier_weights=grad_classifier)


def sgd_step(model: MlpModel, grads: Gradients, lr: float, weight_decay: float) -> MlpModel:
    """In-place update w <- w - lr (grad + weight_decay w); biases are not decayed."""
    for w, g in zip(model.hidden_weights, grads.hidden_weights):
        w -= lr * (g + weight_decay * w)
    for b, g in zip(model.hidden_biases, grads.hidden_biases):
        b -= lr * g
    model.classifier.weights -= lr * (grads.classifier_weights + weight_decay * model.classifier.weights)
    return model


def evaluate(model: MlpModel, dataset: Dataset) -> np.ndarray:
    """Dropout-free argmax predictions; ties resolve to the lowest class index."""
    cache = forward(model, dataset.features)
    return np.argmax(cache.logits, axis=1).astype(np.int64)


@dataclass
class TrainConfig:
    """Hyperparameters for the progressive trainer."""

    loss: str = "softmax"
    epochs_softmax: int = 20
    epochs_margin: int = 20
    epochs_sample: int = 10
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    batch_size: int = 32
    margin: int = 3
    angular_a: float | None = None
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    cluster_lambda: float = 10.0
    cluster_s: float = 4.0
    cluster_alpha: float = 0.5
    cluster_weight: float = 0.1
    cluster_random_init: bool = False
    uncertainty_scale: float = 1.0
    margin_blend: float = 0.15
    seed: int = 0
    max_loss: float = 1e6

    def __post_init__(self):
        if self.loss not in LOSS_CHOICES:
            raise ConfigurationError(f"unknown loss selector {self.loss!r}")
        for name in ("epochs_softmax", "epochs_margin", "epochs_sample"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be nonnegative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if not 1 <= self.margin <= M_MAX:
            raise ConfigurationError(f"margin must lie in [1, {M_MAX}]")
        if self.uncertainty_scale <= 0:
            raise ConfigurationError("uncertainty_scale must be positive")
        if not 0 < self.margin_blend <= 1:
            raise ConfigurationError("margin_blend must lie in (0, 1]")


@dataclass
class EpochRecord:
    epoch: int
    phase: int
    loss: float
    accuracy: float
    bca: float
    g_mean: float
    recalls: np.ndarray


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ensemble_class_uncertainty(
    model: MlpModel, dataset: Dataset, cfg: EnsembleConfig, mask_seed: int
) -> np.ndarray:
    """Per-class uncertainty from an N-pass dropout ensemble over the dataset.

    Each pass applies one sampled sub-network to every input. The ensemble
    outputs are the predictive probabilities (softmax of the logits): their
    variance vanishes for samples the model is consistently sure about and
    peaks where sub-networks disagree, which is what makes the per-class
    average track class rarity. Per-sample covariances are averaged into
    class-level scalars.
    """
    masks = sample_dropout_masks(cfg, _mask_widths(model), mask_seed)
    stacks = np.stack(
        [
            softmax_rows(forward(model, dataset.features, m, cfg.dropout_rate).logits)
            for m in masks
        ]
    )
    estimates = [
        mc_uncertainty(stacks[:, i, :], cfg, true_class=int(y))
        for i, y in enumerate(dataset.labels)
    ]
    return class_uncertainty(estimates, dataset.labels, dataset.n_classes)


def _mask_widths(model: MlpModel) -> list[int]:
    widths = model.layer_widths
    if not widths:
        raise ConfigurationError("dropout ensembles need at least one hidden layer")
    return widths


def _refresh_margins(model: MlpModel, dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> None:
    # Probability-space variances sit two orders of magnitude below the scale
    # the floor-based margin map expects, so a configurable gain is applied
    # before the map; zero uncertainty still yields margin 1.
    seed = int(rng.integers(0, 2**63))
    u = ensemble_class_uncertainty(model, dataset, cfg.ensemble, seed)
    model.classifier.class_uncertainty = u
    model.classifier.margins = np.array(
        [class_margin_from_uncertainty(cfg.uncertainty_scale * float(v)) for v in u],
        dtype=np.int64,
    )


def _init_cluster_state(
    model: MlpModel, dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator
) -> ClusterState:
    c = dataset.n_classes
    d = model.feature_dim
    if cfg.cluster_random_init:
        centers = rng.standard_normal((c, d))
    else:
        feats = forward(model, dataset.features).feature
        centers = np.empty((c, d))
        global_mean = feats.mean(axis=0)
        for k in range(c):
            rows = feats[dataset.labels == k]
            centers[k] = rows.mean(axis=0) if rows.shape[0] else global_mean
    return ClusterState.coupled(
        centers, lam=cfg.cluster_lambda, s=cfg.cluster_s, alpha=cfg.cluster_alpha
    )


def _softmax_batch(model: MlpModel, cache: ForwardCache, yb: np.ndarray):
    """Vectorized batch-mean softmax loss with feature and classifier grads."""
    logits = cache.logits
    n = logits.shape[0]
    lse = log_sum_exp_rows(logits)
    value = float(np.mean(lse - logits[np.arange(n), yb]))
    p = np.exp(logits - lse[:, None])
    p[np.arange(n), yb] -= 1.0
    p /= n
    grad_classifier = p.T @ cache.feature
    grad_feature = p @ model.classifier.weights
    return value, grad_feature, grad_classifier


def _per_sample_batch(model: MlpModel, cache: ForwardCache, yb: np.ndarray, loss_fn, blend: float = 1.0):
    """Batch-mean loss/grads from a per-sample LossResult function.

    ``blend`` < 1 mixes the per-sample loss with the plain softmax loss,
    (1 - blend) softmax + blend margin: the standard stabilizer for
    margin-enforcing softmax variants, which otherwise escape infeasible
    angular demands by collapsing the class vector norms.

    A dropped-out sample can have an exactly zero feature under relu; the
    angular factorization is undefined there, but every margin loss tends to
    the plain softmax loss as the feature norm vanishes, so such samples fall
    back to the softmax loss/gradient.
    """
    feats = cache.feature
    n = feats.shape[0]
    grad_classifier = np.zeros_like(model.classifier.weights)
    grad_feature = np.zeros_like(feats)
    total = 0.0
    for i in range(n):
        if np.linalg.norm(feats[i]) < NORM_FLOOR:
            res = softmax_loss(model.classifier, feats[i], int(yb[i]))
            value, g_w, g_f = res.value, res.grad_weights, res.grad_feature
        else:
            res = loss_fn(model.classifier, feats[i], int(yb[i]), i)
            value, g_w, g_f = res.value, res.grad_weights, res.grad_feature
            if blend < 1.0:
                base = softmax_loss(model.classifier, feats[i], int(yb[i]))
                value = (1.0 - blend) * base.value + blend * value
                g_w = (1.0 - blend) * base.grad_weights + blend * g_w
                g_f = (1.0 - blend) * base.grad_feature + blend * g_f
        total += value
        grad_classifier += g_w
        grad_feature[i] = g_f
    return total / n, grad_feature / n, grad_classifier / n


def _batch_ccdfs(
    model: MlpModel, xb: np.ndarray, yb: np.ndarray, cfg: TrainConfig, rng: np.random.Generator
) -> np.ndarray:
    """Per-sample misclassification probabilities from ensemble feature moments."""
    masks = sample_dropout_masks(cfg.ensemble, _mask_widths(model), int(rng.integers(0, 2**63)))
    feats = np.stack([forward(model, xb, m, cfg.ensemble.dropout_rate).feature for m in masks])
    state = model.classifier
    out = np.empty(xb.shape[0])
    for i in range(xb.shape[0]):
        mu_f, sigma_f = sample_feature_moments(feats[:, i, :])
        j = rival_class(state, mu_f, int(yb[i]))
        mu_e, var_e = error_moments(state.weights[j], state.weights[int(yb[i])], mu_f, sigma_f)
        out[i] = misclassification_ccdf(mu_e, var_e)
    return out


def _sample_weights(ccdfs: np.ndarray) -> np.ndarray:
    """Per-sample true-class weight for the final phase: P(correct) = 1 - CCDF.

    Confident samples keep their full margin term (weight 1); samples likely
    to be misclassified get a down-scaled true-class term, i.e. a stricter
    effective margin, which matches the stated behavior of the re-weighting
    (stricter penalty for more uncertain samples) and leaves the loss equal
    to the plain softmax in the zero-uncertainty, unit-margin limit.
    """
    return 1.0 - ccdfs


def _epoch_record(
    model: MlpModel, dataset: Dataset, epoch: int, phase: int, mean_loss: float
) -> EpochRecord:
    preds = evaluate(model, dataset)
    counts = metrics_mod.ConfusionCounts.from_predictions(dataset.labels, preds, dataset.n_classes)
    accuracy = float(np.mean(preds == dataset.labels))
    try:
        bca_value = metrics_mod.bca(counts)
    except MetricUndefinedError:
        bca_value = float("nan")
    return EpochRecord(
        epoch=epoch,
        phase=phase,
        loss=mean_loss,
        accuracy=accuracy,
        bca=bca_value,
        g_mean=metrics_mod.g_mean(counts),
        recalls=metrics_mod.precision_recall_f1(counts).recall,
    )


def train(
    model: MlpModel, dataset: Dataset, cfg: TrainConfig, eval_dataset: Dataset | None = None
) -> tuple[MlpModel, list[EpochRecord]]:
    """Train in place through the three-phase curriculum; returns (model, log).

    Fully deterministic per (seed, config, dataset): every random draw comes
    from a named stream under cfg.seed. Raises TrainingDivergenceError when
    a batch loss is non-finite or exceeds cfg.max_loss.
    """
    if dataset.n_samples == 0:
        raise DimensionError("training dataset is empty")
    if dataset.n_classes != model.n_classes:
        raise DimensionError("dataset class count does not match the model")
    rng_shuffle = stream_rng(cfg.seed, "shuffle")
    rng_dropout = stream_rng(cfg.seed, "dropout")
    rng_ensemble = stream_rng(cfg.seed, "ensemble")
    rng_cluster = stream_rng(cfg.seed, "centers")
    eval_ds = eval_dataset if eval_dataset is not None else dataset

    keep = cfg.ensemble.dropout_rate
    cluster_state: ClusterState | None = None
    records: list[EpochRecord] = []
    epoch = 0
    n = dataset.n_samples

    for phase, n_epochs in (
        (PHASE_SOFTMAX, cfg.epochs_softmax),
        (PHASE_CLASS_MARGIN, cfg.epochs_margin),
        (PHASE_SAMPLE_WEIGHT, cfg.epochs_sample),
    ):
        for epoch_in_phase in range(n_epochs):
            if phase >= PHASE_CLASS_MARGIN and epoch_in_phase == 0:
                # refresh at the phase boundary only: re-measuring while the
                # margins are already active feeds the flicker they cause
                # back into ever-larger margins
                if cfg.loss == "uncertainty-weighted":
                    _refresh_margins(model, dataset, cfg, rng_ensemble)
                if cfg.loss == "hybrid-cluster" and cluster_state is None:
                    cluster_state = _init_cluster_state(model, dataset, cfg, rng_cluster)
            order = rng_shuffle.permutation(n)
            loss_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                xb = dataset.features[idx]
                yb = dataset.labels[idx]
                if model.hidden_weights:
                    # per-sample Bernoulli(keep) masks, standard SGD dropout
                    masks = [
                        (rng_dropout.random((idx.size, w)) < keep).astype(np.float64)
                        for w in model.layer_widths
                    ]
                    cache = forward(model, xb, masks, keep)
                else:
                    cache = forward(model, xb)
                value, grad_feature, grad_classifier = _batch_loss(
                    model, cache, yb, cfg, phase, cluster_state, rng_ensemble, xb
                )
                if cluster_state is not None and phase >= PHASE_CLASS_MARGIN:
                    scale = cfg.cluster_weight / idx.size
                    _, _, grad_centers = hybrid_loss(cluster_state, cache.feature, yb)
                    cluster_state = update_centers(cluster_state, cache.feature, yb)
                    cluster_state.centers -= cfg.learning_rate * scale * grad_centers
                if not np.isfinite(value) or value > cfg.max_loss:
                    raise TrainingDivergenceError(f"loss {value!r} diverged", epoch)
                grads = backward(model, cache, grad_feature, grad_classifier)
                sgd_step(model, grads, cfg.learning_rate, cfg.weight_decay)
                loss_sum += value * idx.size
            records.append(_epoch_record(model, eval_ds, epoch, phase, loss_sum / n))
            epoch += 1
    return model, records


def _batch_loss(
    model: MlpModel,
    cache: ForwardCache,
    yb: np.ndarray,
    cfg: TrainConfig,
    phase: int,
    cluster_state: ClusterState | None,
    rng_ensemble: np.random.Generator,
    xb: np.ndarray,
):
    """Loss value and gradients for one batch under the phase/selector rules."""
    if phase == PHASE_SOFTMAX or cfg.loss == "softmax":
        return _softmax_batch(model, cache, yb)

    if cfg.loss == "large-margin":
        return _per_sample_batch(
            model,
            cache,
            yb,
            lambda s, f, y, i: large_margin_softmax_loss(s, f, y, cfg.margin),
            blend=cfg.margin_blend,
        )

    if cfg.loss == "uncertainty-weighted":
        margins = model.classifier.margins
        if phase == PHASE_CLASS_MARGIN:
            return _per_sample_batch(
                model,
                cache,
                yb,
                lambda s, f, y, i: large_margin_softmax_loss(s, f, y, int(margins[y])),
                blend=cfg.margin_blend,
            )
        weights = _sample_weights(_batch_ccdfs(model, xb, yb, cfg, rng_ensemble))
        return _per_sample_batch(
            model,
            cache,
            yb,
            lambda s, f, y, i: uncertainty_weighted_margin_loss(
                s, f, y, int(margins[y]), float(weights[i])
            ),
            blend=cfg.margin_blend,
        )

    if cfg.loss in ("angular-i", "angular-ii"):
        variant = "i" if cfg.loss == "angular-i" else "ii"
        return _per_sample_batch(
            model,
            cache,
            yb,
            lambda s, f, y, i: angular_margin_loss(s, f, y, variant=variant, a=cfg.angular_a),
        )

    if cfg.loss == "hybrid-cluster":
        value, grad_feature, grad_classifier = _softmax_batch(model, cache, yb)
        if cluster_state is not None:
            scale = cfg.cluster_weight / cache.feature.shape[0]
            cl_value, cl_grad, _ = hybrid_loss(cluster_state, cache.feature, yb)
            value += scale * cl_value
            grad_feature = grad_feature + scale * cl_grad
        return value, grad_feature, grad_classifier

    raise ConfigurationError(f"unknown loss selector {cfg.loss!r}")


def save_model(model: MlpModel, path) -> None:
    """Persist all parameters to an .npz archive."""
    arrays = {
        "n_hidden": np.array(len(model.hidden_weights), dtype=np.int64),
        "classifier_weights": model.classifier.weights,
        "margins": model.classifier.margins,
        "class_uncertainty": model.classifier.class_uncertainty,
    }
    for i, (w, b) in enumerate(zip(model.hidden_weights, model.hidden_biases)):
        arrays[f"hidden_w{i}"] = w
        arrays[f"hidden_b{i}"] = b
    np.savez(path, **arrays)


def load_model(path) -> MlpModel:
    """Inverse of ``save_model``."""
    with np.load(path) as data:
        n_hidden = int(data["n_hidden"])
        weights = [np.array(data[f"hidden_w{i}"]) for i in range(n_hidden)]
        biases = [np.array(data[f"hidden_b{i}"]) for i in range(n_hidden)]
        state = ClassifierState(
            np.array(data["classifier_weights"]),
            np.array(data["margins"]),
            np.array(data["class_uncertainty"]),
        )
    return MlpModel(weights, biases, state)

"""Experiment harness: train/eval/report commands over a flat key=value config.

Every command is reproducible byte-for-byte from (config, seed): all
randomness flows from one 64-bit master seed through named streams, and
output files are written atomically (temp + rename).

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .errors import ConfigurationError, CsvFormatError, ParameterError, TrainingDivergenceError
from .gradcheck import check
from .margin_loss import (
    angular_margin_loss,
    large_margin_softmax_loss,
    softmax_loss,
    uncertainty_weighted_margin_loss,
)
from .margin_loss import ClassifierState
from .network import (
    LOSS_CHOICES,
    EpochRecord,
    MlpModel,
    TrainConfig,
    ensemble_class_uncertainty,
    evaluate,
    forward,
    load_model,
    save_model,
    train,
)
from .seeding import stream_rng, stream_seed
from .uncertainty import EnsembleConfig

SWEEP_LOSS_TOKENS = ("softmax", "umm", "umm-sum", "hybrid", "large-margin", "angular-i", "angular-ii")


@dataclass
class RunConfig:
    """Flat experiment configuration; every key has a documented default."""

    data_kind: str = "binary"  # binary | longtail | csv
    data_dim: int = 2
    data_std: float = 1.0
    data_classes: int = 10
    data_base_count: int = 1000
    data_decay: float = 0.5
    data_radius: float = 5.0
    data_majority: int = 500
    data_minority: int = 50
    data_separation: float = 3.0
    data_test_count: int = 200
    data_path: str = ""
    model_hidden: tuple = (32, 32)
    train_loss: str = "softmax"
    train_epochs_softmax: int = 20
    train_epochs_umm: int = 15
    train_epochs_sum: int = 10
    train_lr: float = 0.05
    train_weight_decay: float = 1e-4
    train_batch_size: int = 32
    train_margin: int = 3
    train_uncertainty_scale: float = 1.0
    train_margin_blend: float = 0.15
    ensemble_passes: int = 10
    ensemble_dropout: float = 0.5
    ensemble_tau: float = 100.0
    cluster_lambda: float = 10.0
    cluster_s: float = 4.0
    cluster_alpha: float = 0.5
    cluster_weight: float = 0.1
    cluster_random_init: bool = False
    seed: int = 0


# Flat config keys: the first underscore of a field name becomes the section
# dot (data_kind -> data.kind); the bare "seed" stays as is.
_KEY_TO_FIELD = {f.name.replace("_", ".", 1): f.name for f in fields(RunConfig)}


def _parse_value(field_name: str, raw: str):
    default = getattr(RunConfig(), field_name)
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"expected a boolean for {field_name}, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return raw


def parse_config(path) -> RunConfig:
    """Parse a key=value file; unknown keys are rejected by name."""
    cfg = RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigurationError(f"unknown config key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        try:
            setattr(cfg, field_name, _parse_value(field_name, raw))
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {exc}") from exc
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig) -> None:
    if cfg.data_kind not in ("binary", "longtail", "csv"):
        raise ConfigurationError(f"unknown data.kind {cfg.data_kind!r}")
    if cfg.train_loss not in LOSS_CHOICES:
        raise ConfigurationError(f"unknown train.loss {cfg.train_loss!r}")
    if cfg.data_kind == "csv" and not cfg.data_path:
        raise ConfigurationError("data.kind=csv requires data.path")


def config_lines(cfg: RunConfig) -> list[str]:
    """Resolved configuration as sorted key=value lines."""
    lines = []
    for key in sorted(_KEY_TO_FIELD):
        value = getattr(cfg, _KEY_TO_FIELD[key])
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = f"{value:.17g}"
        else:
            text = str(value)
        lines.append(f"{key}={text}")
    return lines


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def build_datasets(cfg: RunConfig) -> tuple[data_mod.Dataset, data_mod.Dataset | None]:
    """Training set (imbalanced) plus a balanced test set for synthetic kinds."""
    if cfg.data_kind == "csv":
        return data_mod.load_csv(cfg.data_path), None
    if cfg.data_kind == "longtail":
        specs = data_mod.longtail_blob_specs(
            n_classes=cfg.data_classes,
            base_count=cfg.data_base_count,
            decay=cfg.data_decay,
            dim=cfg.data_dim,
            radius=cfg.data_radius,
            std=cfg.data_std,
        )
        test_specs = data_mod.longtail_blob_specs(
            n_classes=cfg.data_classes,
            base_count=cfg.data_base_count,
            decay=cfg.data_decay,
            dim=cfg.data_dim,
            radius=cfg.data_radius,
            std=cfg.data_std,
            count_override=cfg.data_test_count,
        )
    else:
        specs = data_mod.two_class_blob_specs(
            majority_count=cfg.data_majority,
            minority_count=cfg.data_minority,
            separation=cfg.data_separation,
            dim=cfg.data_dim,
            std=cfg.data_std,
        )
        test_specs = data_mod.two_class_blob_specs(
            separation=cfg.data_separation,
            dim=cfg.data_dim,
            std=cfg.data_std,
            count_override=cfg.data_test_count,
        )
    train_ds = data_mod.gaussian_blobs(specs, seed=stream_seed(cfg.seed, "data-train"))
    test_ds = data_mod.gaussian_blobs(test_specs, seed=stream_seed(cfg.seed, "data-test"))
    return train_ds, test_ds


def make_train_config(cfg: RunConfig, loss: str | None = None, epochs_sum: int | None = None) -> TrainConfig:
    return TrainConfig(
        loss=loss if loss is not None else cfg.train_loss,
        epochs_softmax=cfg.train_epochs_softmax,
        epochs_margin=cfg.train_epochs_umm,
        epochs_sample=cfg.train_epochs_sum if epochs_sum is None else epochs_sum,
        learning_rate=cfg.train_lr,
        weight_decay=cfg.train_weight_decay,
        batch_size=cfg.train_batch_size,
        margin=cfg.train_margin,
        uncertainty_scale=cfg.train_uncertainty_scale,
        margin_blend=cfg.train_margin_blend,
        ensemble=EnsembleConfig(
            n_passes=cfg.ensemble_passes,
            dropout_rate=cfg.ensemble_dropout,
            precision=cfg.ensemble_tau,
        ),
        cluster_lambda=cfg.cluster_lambda,
        cluster_s=cfg.cluster_s,
        cluster_alpha=cfg.cluster_alpha,
        cluster_weight=cfg.cluster_weight,
        cluster_random_init=cfg.cluster_random_init,
        seed=cfg.seed,
    )


def metrics_csv_text(records: list[EpochRecord], n_classes: int) -> str:
    header = ["epoch", "phase", "loss", "accuracy", "bca", "g_mean"] + [
        f"recall_{k}" for k in range(n_classes)
    ]
    lines = [",".join(header)]
    for r in records:
        row = [str(r.epoch), str(r.phase), _fmt(r.loss), _fmt(r.accuracy), _fmt(r.bca), _fmt(r.g_mean)]
        row += [_fmt(v) for v in r.recalls]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def run_training(cfg: RunConfig, loss: str | None = None, epochs_sum: int | None = None):
    """Build data + model from the config, train, and return all artifacts."""
    train_ds, test_ds = build_datasets(cfg)
    model = MlpModel.init(
        train_ds.dim, cfg.model_hidden, train_ds.n_classes, stream_rng(cfg.seed, "init")
    )
    tcfg = make_train_config(cfg, loss=loss, epochs_sum=epochs_sum)
    model, records = train(model, train_ds, tcfg, eval_dataset=test_ds)
    return model, records, train_ds, test_ds


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.txt", "\n".join(config_lines(cfg)) + "\n")
    model, records, train_ds, test_ds = run_training(cfg)
    atomic_write_text(out / "metrics.csv", metrics_csv_text(records, train_ds.n_classes))
    save_model(model, out / "model.npz")
    data_mod.save_csv(train_ds, out / "train.csv")
    if test_ds is not None:
        data_mod.save_csv(test_ds, out / "test.csv")
    print(f"run complete: {out / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = data_mod.load_csv(args.data)
    preds = evaluate(model, ds)
    counts = metrics_mod.ConfusionCounts.from_predictions(ds.labels, preds, ds.n_classes)
    prf = metrics_mod.precision_recall_f1(counts)
    lines = ["metric,value"]
    lines.append(f"accuracy,{_fmt(float(np.mean(preds == ds.labels)))}")
    lines.append(f"bca,{_fmt(metrics_mod.bca(counts))}")
    lines.append(f"g_mean,{_fmt(metrics_mod.g_mean(counts))}")
    lines.append(f"iba,{_fmt(metrics_mod.iba(counts))}")
    lines.append(f"macro_f1,{_fmt(prf.macro_f1)}")
    for k in range(ds.n_classes):
        lines.append(f"recall_{k},{_fmt(float(prf.recall[k]))}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "eval.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_uncertainty(args) -> int:
    model = load_model(args.model)
    ds = data_mod.load_csv(args.data)
    cfg = _load_config(args)
    ens = EnsembleConfig(
        n_passes=cfg.ensemble_passes, dropout_rate=cfg.ensemble_dropout, precision=cfg.ensemble_tau
    )
    u = ensemble_class_uncertainty(model, ds, ens, stream_seed(cfg.seed, "uncertainty-report"))
    lines = ["class,count,frequency,mean_uncertainty"]
    for k in range(ds.n_classes):
        lines.append(
            f"{k},{int(ds.class_counts[k])},{_fmt(float(ds.class_frequencies[k]))},{_fmt(float(u[k]))}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "uncertainty.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_features2d(args) -> int:
    model = load_model(args.model)
    ds = data_mod.load_csv(args.data)
    if model.feature_dim != 2:
        raise ConfigurationError(
            f"features2d needs a penultimate width of 2, model has {model.feature_dim}"
        )
    feats = forward(model, ds.features).feature
    lines = ["x,y,label"]
    for row, lab in zip(feats, ds.labels):
        lines.append(f"{_fmt(row[0])},{_fmt(row[1])},{int(lab)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "features2d.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    rng = stream_rng(args.seed, "gradcheck")
    c, d = 4, 6
    state = ClassifierState(rng.standard_normal((c, d)))
    f = rng.standard_normal(d)
    y = int(rng.integers(0, c))

    loss = args.loss
    if loss == "hybrid-cluster":
        return _gradcheck_hybrid(args, rng)
    if loss == "softmax":
        loss_fn = lambda s, v: softmax_loss(s, v, y)
    elif loss == "large-margin":
        loss_fn = lambda s, v: large_margin_softmax_loss(s, v, y, 3)
    elif loss == "uncertainty-weighted":
        loss_fn = lambda s, v: uncertainty_weighted_margin_loss(s, v, y, 2, 0.5)
    elif loss == "angular-i":
        loss_fn = lambda s, v: angular_margin_loss(s, v, y, variant="i")
    elif loss == "angular-ii":
        loss_fn = lambda s, v: angular_margin_loss(s, v, y, variant="ii")
    else:
        raise ConfigurationError(f"gradcheck does not support loss {loss!r}")

    x0 = np.concatenate([state.weights.ravel(), f])

    def value_at(x):
        s = ClassifierState(x[: c * d].reshape(c, d))
        return loss_fn(s, x[c * d :]).value

    res = loss_fn(state, f)
    analytic = np.concatenate([res.grad_weights.ravel(), res.grad_feature])
    report = check(value_at, analytic, x0, tolerance=args.tolerance)
    print(f"loss={loss} seed={args.seed}")
    print(report)
    return 0 if report.passed else 1


def _gradcheck_hybrid(args, rng) -> int:
    from .cluster_loss import ClusterState, hybrid_loss, inter_class_margin_loss

    n_classes, dim, batch = 4, 3, 6
    while True:
        centers = 2.0 * rng.standard_normal((n_classes, dim))
        feats = 2.0 * rng.standard_normal((batch, dim))
        labels = rng.integers(0, n_classes, batch)
        state = ClusterState.coupled(centers, lam=2.0, s=4.0)
        half = 0.5 * np.sum((feats - centers[labels]) ** 2, axis=1)
        iu, ju = np.triu_indices(n_classes, k=1)
        dists = np.linalg.norm(centers[iu] - centers[ju], axis=1)
        if np.all(np.abs(half - state.gamma) > 1e-3) and np.all(np.abs(2.0 - dists) > 1e-3):
            break
    _, grad_feats, grad_centers = hybrid_loss(state, feats, labels)

    feat_report = check(
        lambda x: hybrid_loss(state, x.reshape(batch, dim), labels)[0],
        grad_feats.ravel(),
        feats.ravel(),
        tolerance=args.tolerance,
    )
    center_report = check(
        lambda x: inter_class_margin_loss(
            ClusterState.coupled(x.reshape(n_classes, dim), lam=2.0, s=4.0)
        )[0],
        grad_centers.ravel(),
        centers.ravel(),
        tolerance=args.tolerance,
    )
    print(f"loss=hybrid-cluster seed={args.seed}")
    print(f"features: {feat_report}")
    print(f"centers:  {center_report}")
    return 0 if feat_report.passed and center_report.passed else 1


def cmd_bias_demo(args) -> int:
    report = data_mod.boundary_bias_demo(args.ratio, seed=args.seed)
    lines = [
        f"imbalance_ratio={args.ratio:g}",
        f"majority_mean={_fmt(report.majority_mean)} (n={report.majority_count})",
        f"minority_mean={_fmt(report.minority_mean)} (n={report.minority_count})",
        f"learned_threshold={_fmt(report.learned_threshold)}",
        f"equal_prior_optimal={_fmt(report.optimal_threshold)}",
        f"bayes_threshold={_fmt(report.bayes_threshold)}",
        f"displaced_toward_minority={str(report.displaced_toward_minority).lower()}",
        f"balanced_error_learned={_fmt(report.balanced_error_learned)}",
        f"balanced_error_optimal={_fmt(report.balanced_error_optimal)}",
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "bias_demo.txt", text)
    sys.stdout.write(text)
    return 0


def _sweep_variant(token: str) -> tuple[str, int | None]:
    """Map a sweep loss token to (selector, epochs_sum override)."""
    if token == "umm":
        return "uncertainty-weighted", 0
    if token == "umm-sum":
        return "uncertainty-weighted", None
    if token == "hybrid":
        return "hybrid-cluster", None
    return token, None


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    losses = [t.strip() for t in args.losses.split(",") if t.strip()]
    for t in losses:
        if t not in SWEEP_LOSS_TOKENS:
            raise ConfigurationError(f"unknown sweep loss token {t!r}")
    dropouts = (
        [float(v) for v in args.dropouts.split(",") if v.strip()]
        if args.dropouts
        else [cfg.ensemble_dropout]
    )
    seeds = [cfg.seed + i for i in range(args.seeds)]

    rows = []  # (loss, dropout, seed, metric, value)
    for token in losses:
        selector, epochs_sum = _sweep_variant(token)
        for p in dropouts:
            for seed in seeds:
                run_cfg = replace(cfg, seed=seed, ensemble_dropout=p)
                model, records, train_ds, test_ds = run_training(
                    run_cfg, loss=selector, epochs_sum=epochs_sum
                )
                final = records[-1]
                rows.append((token, p, seed, "accuracy", final.accuracy))
                rows.append((token, p, seed, "bca", final.bca))
                rows.append((token, p, seed, "g_mean", final.g_mean))
                for k, r in enumerate(final.recalls):
                    rows.append((token, p, seed, f"recall_{k}", float(r)))

    lines = ["loss,dropout,seed,metric,value"]
    for token, p, seed, metric, value in rows:
        lines.append(f"{token},{_fmt(p)},{seed},{metric},{_fmt(value)}")
    # mean/std summary rows per (loss, dropout, metric)
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for token, p, seed, metric, value in rows:
        key = (token, p, metric)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(value)
    for key in order:
        token, p, metric = key
        vals = np.asarray(groups[key])
        lines.append(f"{token},{_fmt(p)},mean,{metric},{_fmt(float(vals.mean()))}")
        lines.append(f"{token},{_fmt(p)},std,{metric},{_fmt(float(vals.std()))}")
    text = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "sweep.csv", text)
    print(f"sweep complete: {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ummlearn",
        description="Uncertainty-driven max-margin learning experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True, out_required=False):
        if config:
            p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", required=out_required, help="output directory")

    p_train = sub.add_parser("train", help="train a model and emit metrics.csv")
    add_common(p_train, out_required=True)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on a CSV dataset")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out")
    p_eval.set_defaults(fn=cmd_eval)

    p_unc = sub.add_parser("uncertainty", help="per-class uncertainty/frequency report")
    p_unc.add_argument("--model", required=True)
    p_unc.add_argument("--data", required=True)
    add_common(p_unc)
    p_unc.set_defaults(fn=cmd_uncertainty)

    p_feat = sub.add_parser("features2d", help="dump 2-D penultimate features")
    p_feat.add_argument("--model", required=True)
    p_feat.add_argument("--data", required=True)
    p_feat.add_argument("--out")
    p_feat.set_defaults(fn=cmd_features2d)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check for a loss")
    p_grad.add_argument("--loss", default="softmax")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.set_defaults(fn=cmd_gradcheck)

    p_bias = sub.add_parser("bias-demo", help="boundary bias of empirical loss minimization")
    p_bias.add_argument("--ratio", type=float, default=10.0)
    p_bias.add_argument("--seed", type=int, default=0)
    p_bias.add_argument("--out")
    p_bias.set_defaults(fn=cmd_bias_demo)

    p_sweep = sub.add_parser("sweep", help="seeds x losses (x dropouts) comparison")
    add_common(p_sweep, out_required=True)
    p_sweep.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    p_sweep.add_argument("--losses", default="softmax,umm,umm-sum,hybrid")
    p_sweep.add_argument("--dropouts", default=None, help="comma list of keep-probabilities")
    p_sweep.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ParameterError, CsvFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Supervised + contrastive training recipe and its diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ContractError
from .losses import LossConfig, compute_loss, uniformity_regularizer
from .model import SGD, Model, forward, freeze_encoder_retrain_classifier
from .numerics import Tensor
from .synthdata import Benchmark, augment_two_views, strong_augment

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class PseudoLabelConfig:
    enabled: bool = False
    confidence: float = 0.95
    lambda_reg: float = 0.1
    strong_strength: float = 0.1
    mask_prob: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise ConfigError(f"confidence must lie in (0, 1], got {self.confidence}")


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    steps: int = 1000
    batch_source: int = 32
    batch_target: int = 32
    lambda_contrastive: float = 1.0
    pseudo_label: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    seed: int = 0
    eval_interval: int = 50
    augment_strength: float = 0.1
    hidden: int = 64
    feature_dim: int = 16
    probe_steps: int = 500
    probe_lr: float = 0.05
    # few-shot labeled target points also join the unlabeled contrastive pool
    few_shot_in_contrastive: bool = True

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if isinstance(self.pseudo_label, dict):
            object.__setattr__(self, "pseudo_label", PseudoLabelConfig(**self.pseudo_label))
        if self.steps < 1 or self.batch_source < 1 or self.batch_target < 1 or self.eval_interval < 1:
            raise ConfigError("steps, batch sizes and eval_interval must all be >= 1")
        if self.lambda_contrastive < 0:
            raise ConfigError("lambda_contrastive must be >= 0")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["loss"] = self.loss.to_dict()
        out["pseudo_label"] = asdict(self.pseudo_label)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def with_overrides(self, overrides: dict) -> TrainConfig:
        base = self.to_dict()
        for key, value in overrides.items():
            if key in ("loss", "pseudo_label") and isinstance(value, dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return TrainConfig.from_dict(base)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.intp)
    c = probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"labels must lie in [0, {c})")
    return nx.mean(nx.neg(nx.log(nx.clamp(nx.pick(probs, labels), LOG_CLAMP, 1.0))))


def pseudo_label_loss(weak_probs: Tensor, strong_probs: Tensor, confidence: float) -> tuple[Tensor, int]:
    """FixMatch-style term: strong view fits the weak view's confident argmax.

    Returns the loss (summed over retained rows, divided by the full batch
    size) and the number of retained rows.
    """
    weak = weak_probs.data
    keep = np.flatnonzero(weak.max(axis=1) >= confidence)
    if keep.size == 0:
        return Tensor(0.0), 0
    targets = weak.argmax(axis=1)[keep]
    picked = nx.pick(nx.take_rows(strong_probs, keep), targets)
    total = nx.sum(nx.neg(nx.log(nx.clamp(picked, LOG_CLAMP, 1.0))))
    return nx.mul(total, 1.0 / weak.shape[0]), int(keep.size)


def deviation_score(model: Model, points, labels) -> float:
    """Mean over classes of the cosine distance between feature centroid and class weight."""
    labels = np.asarray(labels)
    feats = model.encoder(Tensor(points)).data
    W = model.classifier.W.data
    dists = []
    for c in range(W.shape[0]):
        members = labels == c
        if not members.any():
            continue
        mu = feats[members].mean(axis=0)
        denom = np.linalg.norm(mu) * np.linalg.norm(W[c])
        cos = float(mu @ W[c] / denom) if denom > 0 else 0.0
        dists.append(1.0 - cos)
    if not dists:
        raise ContractError("deviation_score: no class has any sample")
    return float(np.mean(dists))


METRIC_COLUMNS = (
    "step",
    "loss_total",
    "loss_ce",
    "loss_contrastive",
    "loss_pseudo",
    "target_accuracy",
    "mean_max_prob",
    "deviation_score",
)


@dataclass
class RunRecord:
    config: dict
    metrics: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    features: np.ndarray | None = None
    feature_labels: np.ndarray | None = None
    feature_domains: list[str] | None = None
    class_weights: np.ndarray | None = None
    rng_state: dict | None = None
    model: Model | None = field(default=None, repr=False, compare=False)

    @property
    def diverged(self) -> bool:
        return bool(self.final.get("diverged", False))

    def to_json_dict(self) -> dict:
        return {"config": self.config, "final": self.final, "intervals": len(self.metrics)}

    def write(self, directory) -> None:
        """Persist as metrics.csv, record.json, embeddings.csv and class_weights.csv."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "metrics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
            w.writeheader()
            for row in self.metrics:
                w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in METRIC_COLUMNS})
        if self.features is not None:
            dim = self.features.shape[1]
            with open(d / "embeddings.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"f{k}" for k in range(dim)] + ["label", "domain"])
                for vec, lab, dom in zip(self.features, self.feature_labels, self.feature_domains):
                    w.writerow([repr(float(v)) for v in vec] + [int(lab), dom])
        if self.class_weights is not None:
            with open(d / "class_weights.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["class"] + [f"w{k}" for k in range(self.class_weights.shape[1])])
                for c, row in enumerate(self.class_weights):
                    w.writerow([c] + [repr(float(v)) for v in row])
        # record.json last: its presence marks a completed run
        with open(d / "record.json", "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


def evaluate_target(model: Model, target_points: np.ndarray, truth: np.ndarray) -> dict:
    out = forward(model, target_points)
    probs = out.probs.data
    return {
        "target_accuracy": float(np.mean(probs.argmax(axis=1) == truth)),
        "mean_max_prob": float(probs.max(axis=1).mean()),
        "deviation_score": deviation_score(model, target_points, truth),
    }


def build_model(cfg: TrainConfig, input_dim: int, num_classes: int) -> Model:
    return Model.create(
        input_dim=input_dim,
        num_classes=num_classes,
        hidden=cfg.hidden,
        feature_dim=cfg.feature_dim,
        seed=cfg.seed,
        with_head=cfg.loss.kind.value == "NTCL",
    )


def train(cfg: TrainConfig, data: Benchmark, model: Model | None = None) -> RunRecord:
    """Run the full recipe and return metrics plus final diagnostics.

    Objective per step: cross-entropy on a source batch joined with every
    few-shot target point, plus ``lambda_contrastive`` times the configured
    contrastive loss on two augmented views of a target batch, plus the
    optional pseudo-label term and its uniformity regularizer. Ground-truth
    target labels are touched only in evaluation and the final probe.
    """
    src, tgt, split = data.source, data.target, data.split
    num_classes = src.num_classes
    if model is None:
        model = build_model(cfg, src.points.shape[1], num_classes)
    opt = SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[3])

    labeled_pts = np.concatenate([src.points, tgt.points[split.indices]])
    labeled_y = np.concatenate([src.labels, tgt.few_shot_labels(split)])
    n_src = len(src)
    few_shot = np.arange(n_src, len(labeled_pts))
    if cfg.few_shot_in_contrastive:
        pool = np.arange(len(tgt))
    else:
        pool = np.setdiff1d(np.arange(len(tgt)), split.indices)
    truth = tgt.ground_truth()

    record = RunRecord(config=cfg.to_dict(), model=model)
    pl = cfg.pseudo_label
    failure = None
    step = 0
    for step in range(1, cfg.steps + 1):
        sb = rng.choice(n_src, size=min(cfg.batch_source, n_src), replace=False)
        rows = np.concatenate([sb, few_shot])
        tb = pool[rng.choice(len(pool), size=min(cfg.batch_target, len(pool)), replace=False)]
        va, vb = augment_two_views(tgt.points[tb], cfg.augment_strength, rng)

        opt.zero_grad()
        out_l = forward(model, labeled_pts[rows])
        ce = cross_entropy(out_l.probs, labeled_y[rows])
        out_a, out_b = forward(model, va), forward(model, vb)
        con = compute_loss(cfg.loss, out_a, out_b, head=model.head)
        total = nx.add(ce, nx.mul(con, cfg.lambda_contrastive))
        pl_value = 0.0
        if pl.enabled:
            strong = forward(model, strong_augment(tgt.points[tb], pl.strong_strength, rng, pl.mask_prob))
            pl_loss, kept = pseudo_label_loss(out_a.probs, strong.probs, pl.confidence)
            if kept:
                confident = np.flatnonzero(out_a.probs.data.max(axis=1) >= pl.confidence)
                reg = uniformity_regularizer(nx.take_rows(strong.probs, confident))
                pl_loss = nx.add(pl_loss, nx.mul(reg, pl.lambda_reg / len(tb)))
            total = nx.add(total, pl_loss)
            pl_value = pl_loss.item()

        if not math.isfinite(total.item()):
            failure = f"non-finite loss at step {step}"
            break
        nx.backward(total)
        opt.step()

        if step % cfg.eval_interval == 0 or step == cfg.steps:
            row = {
                "step": step,
                "loss_total": total.item(),
                "loss_ce": ce.item(),
                "loss_contrastive": con.item(),
                "loss_pseudo": pl_value,
            }
            row.update(evaluate_target(model, tgt.points, truth))
            record.metrics.append(row)

    final = evaluate_target(model, tgt.points, truth)
    final["actual_accuracy"] = final.pop("target_accuracy")
    if failure is None:
        final["oracle_accuracy"] = freeze_encoder_retrain_classifier(
            model, tgt.points, truth, steps=cfg.probe_steps, lr=cfg.probe_lr, seed=cfg.seed
        )
        final["oracle_gap"] = final["oracle_accuracy"] - final["actual_accuracy"]
    final["diverged"] = failure is not None
    final["failure"] = failure
    final["steps_completed"] = step if failure is None else step - 1
    record.final = final

    all_pts = np.concatenate([src.points, tgt.points])
    record.features = model.encoder(Tensor(all_pts)).data.copy()
    record.feature_labels = np.concatenate([src.labels, truth])
    record.feature_domains = [src.domain_tag] * len(src) + [tgt.domain_tag] * len(tgt)
    record.class_weights = model.classifier.W.data.copy()
    record.rng_state = rng.bit_generator.state
    return record


def records_equal(a: RunRecord, b: RunRecord) -> bool:
    """Bit-level comparison of everything a run produces."""
    return (
        a.config == b.config
        and a.metrics == b.metrics
        and a.final == b.final
        and np.array_equal(a.features, b.features)
        and np.array_equal(a.feature_labels, b.feature_labels)
        and a.feature_domains == b.feature_domains
        and np.array_equal(a.class_weights, b.class_weights)
        and a.rng_state == b.rng_state
    )


__all__ = [
    "PseudoLabelConfig",
    "TrainConfig",
    "RunRecord",
    "cross_entropy",
    "pseudo_label_loss",
    "deviation_score",
    "evaluate_target",
    "train",
    "records_equal",
]

"""Encoder/classifier pair and the optimiser that trains it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError
from .numerics import Tensor


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Encoder:
    """Tanh MLP with layer widths ``widths``; no activation after the last layer.

    A single width gives the identity map, which tests use as a passthrough.
    """

    def __init__(self, widths, seed: int | np.random.Generator = 0):
        widths = [int(w) for w in widths]
        if not widths or min(widths) < 1:
            raise ContractError(f"bad encoder widths {widths}")
        rng = np.random.default_rng(seed)
        self.widths = widths
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self.weights.append(Tensor(_uniform(rng, fan_in, (fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(_uniform(rng, fan_in, fan_out), requires_grad=True))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = nx.add_row(nx.matmul(x, w), b)
            if k < last:
                x = nx.tanh(x)
        return x


class ClassifierWeights:
    """Bias-free linear classifier; row c of ``W`` is the direction of class c."""

    def __init__(self, num_classes: int, dim: int, seed: int | np.random.Generator = 0, zero: bool = False):
        if zero:
            w = np.zeros((num_classes, dim))
        else:
            w = _uniform(np.random.default_rng(seed), dim, (num_classes, dim))
        self.W = Tensor(w, requires_grad=True)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.W]

    def __call__(self, features: Tensor) -> Tensor:
        return nx.matmul(features, nx.transpose(self.W))


@dataclass
class ModelOutputs:
    features: Tensor
    logits: Tensor
    probs: Tensor


class Model:
    """``classifier(encoder(x))`` with an optional projection head for NTCL."""

    def __init__(self, encoder: Encoder, classifier: ClassifierWeights, head=None):
        if classifier.W.shape[1] != encoder.output_dim:
            raise DimensionError("classifier width does not match encoder output")
        self.encoder = encoder
        self.classifier = classifier
        self.head = head

    @classmethod
    def create(
        cls,
        input_dim: int = 2,
        num_classes: int = 4,
        hidden: int = 64,
        feature_dim: int = 16,
        seed: int = 0,
        with_head: bool = False,
    ) -> Model:
        from .losses import ProjectionHead

        enc_seed, clf_seed, head_seed = np.random.SeedSequence(seed).spawn(3)
        encoder = Encoder([input_dim, hidden, hidden, feature_dim], seed=np.random.default_rng(enc_seed))
        classifier = ClassifierWeights(num_classes, feature_dim, seed=np.random.default_rng(clf_seed))
        head = ProjectionHead(feature_dim, seed=np.random.default_rng(head_seed)) if with_head else None
        return cls(encoder, classifier, head)

    def parameters(self) -> list[Tensor]:
        params = self.encoder.parameters() + self.classifier.parameters()
        if self.head is not None:
            params += self.head.parameters()
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for k, (w, b) in enumerate(zip(self.encoder.weights, self.encoder.biases)):
            named += [(f"encoder.{k}.weight", w), (f"encoder.{k}.bias", b)]
        named.append(("classifier.W", self.classifier.W))
        if self.head is not None:
            for name in ("w1", "b1", "w2", "b2"):
                named.append((f"head.{name}", getattr(self.head, name)))
        return named

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def forward(model: Model, batch) -> ModelOutputs:
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.ndim != 2 or x.shape[1] != model.encoder.input_dim:
        raise DimensionError(f"batch of shape {x.shape} does not fit input width {model.encoder.input_dim}")
    features = model.encoder(x)
    logits = model.classifier(features)
    return ModelOutputs(features, logits, nx.softmax_rows(logits))


def sgd_step(params, grads, velocities, lr: float, momentum: float = 0.0, weight_decay: float = 0.0) -> None:
    """In-place momentum SGD: ``v <- mu*v + g + wd*theta``, ``theta <- theta - lr*v``.

    Parameters with a ``None`` gradient are treated as having a zero gradient.
    """
    for p, g, v in zip(params, grads, velocities):
        step = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if weight_decay:
            step = step + weight_decay * p.data
        v *= momentum
        v += step
        p.data -= lr * v


class SGD:
    def __init__(self, params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        sgd_step(self.params, [p.grad for p in self.params], self.velocities, self.lr, self.momentum, self.weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def accuracy(model: Model, points, labels) -> float:
    out = forward(model, points)
    return float(np.mean(out.logits.data.argmax(axis=1) == np.asarray(labels)))


def freeze_encoder_retrain_classifier(
    model: Model,
    points,
    labels,
    steps: int = 500,
    lr: float = 0.05,
    momentum: float = 0.9,
    seed: int = 0,
) -> float:
    """Train a fresh classifier on frozen features with true labels; return its accuracy.

    Full-batch momentum SGD on cross-entropy. The encoder is only read.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0:
        raise ContractError("probe needs at least one labeled point")
    feats = Tensor(model.encoder(Tensor(points)).data)  # detached
    clf = ClassifierWeights(model.classifier.num_classes, feats.shape[1], seed=seed)
    opt = SGD(clf.parameters(), lr=lr, momentum=momentum)
    for _ in range(steps):
        opt.zero_grad()
        probs = nx.softmax_rows(clf(feats))
        loss = nx.mean(nx.neg(nx.log(nx.clamp(nx.pick(probs, labels), 1e-12, 1.0))))
        nx.backward(loss)
        opt.step()
    pred = clf(feats).data.argmax(axis=1)
    return float(np.mean(pred == labels))

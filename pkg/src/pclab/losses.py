"""Contrastive losses over paired views, in feature space or in probability space.

All InfoNCE-style variants share :func:`info_nce_core`. For query ``a_i`` the
per-sample term is

    -log  exp(s*sim(a_i, b_i))
          / ( sum_{j != i} exp(s*sim(a_i, a_j)) + sum_k exp(s*sim(a_i, b_k)) )

and the loss is its batch mean, averaged over both query directions when
``symmetrize`` is set. Variants differ only in what they feed the core:

=========  =========================================  ====================
kind       representation                             similarity
=========  =========================================  ====================
FCL        l2-normalized features                     dot
LCL        l2-normalized logits                       dot
NTCL       l2-normalized projection-head features     dot
SFCL       l2-normalized features, near-duplicate     dot
           negatives dropped
PCL        softmax probabilities, unnormalized        dot
PCL_L2     l2-normalized probabilities                dot
PCL_MSE    softmax probabilities                      -||p - q||^2
BCE        softmax probabilities (pairwise BCE)       dot
=========  =========================================  ====================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ContractError, DimensionError
from .numerics import Tensor

LOG_CLAMP = 1e-12
PROB_TOL = 1e-6


class LossKind(str, Enum):
    FCL = "FCL"
    PCL = "PCL"
    LCL = "LCL"
    NTCL = "NTCL"
    PCL_L2 = "PCL_L2"
    PCL_MSE = "PCL_MSE"
    BCE = "BCE"
    SFCL = "SFCL"


@dataclass(frozen=True)
class LossConfig:
    """Variant selector plus the knobs each variant reads.

    ``scale`` multiplies similarities inside the exponent (7 for the
    classification setting, 20 for dense prediction).
    """

    kind: LossKind = LossKind.PCL
    scale: float = 7.0
    bce_threshold: float = 0.95
    sfcl_threshold: float = 0.95
    symmetrize: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", LossKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown loss kind {self.kind!r}") from None
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        for name in ("bce_threshold", "sfcl_threshold"):
            t = getattr(self, name)
            if not 0.0 < t <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {t}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "scale": self.scale,
            "bce_threshold": self.bce_threshold,
            "sfcl_threshold": self.sfcl_threshold,
            "symmetrize": self.symmetrize,
        }


@dataclass(frozen=True)
class PairedEmbeddings:
    """Row i of ``view_a`` and row i of ``view_b`` come from the same sample."""

    view_a: Tensor
    view_b: Tensor

    def __post_init__(self):
        a, b = self.view_a, self.view_b
        if a.ndim != 2 or a.shape != b.shape:
            raise DimensionError(f"paired views must be matrices of equal shape, got {a.shape} and {b.shape}")
        if a.shape[0] < 1:
            raise ContractError("empty batch")

    @property
    def n(self) -> int:
        return self.view_a.shape[0]


def _check_probabilities(*views: Tensor) -> None:
    for v in views:
        d = v.data
        if v.ndim != 2 or np.any(d < 0.0) or np.any(np.abs(d.sum(axis=1) - 1.0) > PROB_TOL):
            raise ContractError("rows must be probability vectors (nonnegative, summing to 1)")


def _dot_similarity(x: Tensor, y: Tensor) -> Tensor:
    return nx.matmul(x, nx.transpose(y))


def _neg_sq_distance(x: Tensor, y: Tensor) -> Tensor:
    return nx.neg(nx.sq_dist(x, y))


def _one_direction(
    q: Tensor,
    k: Tensor,
    scale: float,
    similarity: Callable[[Tensor, Tensor], Tensor],
    drop_above: float | None,
) -> Tensor:
    n = q.shape[0]
    same = similarity(q, q)
    cross = similarity(q, k)
    keep_same = ~np.eye(n, dtype=bool)
    keep_cross = np.ones((n, n), dtype=bool)
    if drop_above is not None:
        # false-negative removal; decided on detached similarities
        keep_same &= same.data <= drop_above
        keep_cross &= (cross.data <= drop_above) | np.eye(n, dtype=bool)
    logits = nx.mul(nx.concat([same, cross], axis=1), scale)
    mask = np.concatenate([keep_same, keep_cross], axis=1)
    per_sample = nx.sub(nx.logsumexp_rows(logits, mask), nx.diagonal(nx.mul(cross, scale)))
    return nx.mean(per_sample)


def info_nce_core(
    view_a: Tensor,
    view_b: Tensor,
    scale: float,
    symmetrize: bool = True,
    *,
    similarity: Callable[[Tensor, Tensor], Tensor] = _dot_similarity,
    drop_negatives_above: float | None = None,
) -> Tensor:
    """Batch-mean InfoNCE with in-batch negatives from both views.

    Inputs are used as given; any normalization happens in the caller.
    ``drop_negatives_above`` removes negatives whose raw similarity to the
    query exceeds the threshold (the positive is always kept).
    """
    if view_a.shape[0] == 0:
        raise ContractError("empty batch")
    if view_a.shape != view_b.shape:
        raise DimensionError(f"views differ in shape: {view_a.shape} vs {view_b.shape}")
    forward = _one_direction(view_a, view_b, scale, similarity, drop_negatives_above)
    if not symmetrize:
        return forward
    backward = _one_direction(view_b, view_a, scale, similarity, drop_negatives_above)
    return nx.mul(nx.add(forward, backward), 0.5)


def fcl_loss(features: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    a = nx.l2_normalize(features.view_a)
    b = nx.l2_normalize(features.view_b)
    return info_nce_core(a, b, cfg.scale, cfg.symmetrize)


def lcl_loss(logits: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    return fcl_loss(logits, cfg)


def ntcl_loss(features: PairedEmbeddings, head: Callable[[Tensor], Tensor], cfg: LossConfig) -> Tensor:
    projected = PairedEmbeddings(head(features.view_a), head(features.view_b))
    return fcl_loss(projected, cfg)


def sfcl_loss(features: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    a = nx.l2_normalize(features.view_a)
    b = nx.l2_normalize(features.view_b)
    return info_nce_core(a, b, cfg.scale, cfg.symmetrize, drop_negatives_above=cfg.sfcl_threshold)


def pcl_loss(probs: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    """InfoNCE directly on probability vectors.

    No l2 normalization: the unit l1 norm is what caps ``p . q`` at 1, with
    the cap reached only by identical one-hot vectors.
    """
    _check_probabilities(probs.view_a, probs.view_b)
    return info_nce_core(probs.view_a, probs.view_b, cfg.scale, cfg.symmetrize)


def pcl_l2_loss(probs: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    _check_probabilities(probs.view_a, probs.view_b)
    return fcl_loss(probs, cfg)


def pcl_mse_loss(probs: PairedEmbeddings, cfg: LossConfig) -> Tensor:
    _check_probabilities(probs.view_a, probs.view_b)
    return info_nce_core(probs.view_a, probs.view_b, cfg.scale, cfg.symmetrize, similarity=_neg_sq_distance)


def bce_loss(probs_view0: Tensor, probs_view1: Tensor, cfg: LossConfig) -> Tensor:
    """Pairwise binary cross-entropy over all (view, sample) pairs, summed.

    The target for pair ((n, i), (m, j)) is 1 when ``p^n_i . p^m_j >= t`` or
    ``i == j``, else 0. Targets come from detached values.
    """
    if probs_view0.shape != probs_view1.shape or probs_view0.ndim != 2:
        raise DimensionError(f"views differ in shape: {probs_view0.shape} vs {probs_view1.shape}")
    _check_probabilities(probs_view0, probs_view1)
    n = probs_view0.shape[0]
    stacked = nx.concat([probs_view0, probs_view1], axis=0)
    sims = nx.matmul(stacked, nx.transpose(stacked))
    sample = np.tile(np.arange(n), 2)
    target = ((sims.data >= cfg.bce_threshold) | (sample[:, None] == sample[None, :])).astype(np.float64)
    pos = nx.mul(nx.log(nx.clamp(sims, LOG_CLAMP, 1.0)), target)
    negs = nx.mul(nx.log(nx.clamp(nx.sub(1.0, sims), LOG_CLAMP, 1.0)), 1.0 - target)
    return nx.neg(nx.sum(nx.add(pos, negs)))


def uniformity_regularizer(probs: Tensor) -> Tensor:
    """``-sum_i sum_j (1/C) log p_ij`` over the given (already selected) rows."""
    if probs.ndim != 2:
        raise DimensionError(f"expected an (N, C) matrix, got {probs.shape}")
    if probs.shape[0] == 0:
        return Tensor(0.0)
    c = probs.shape[1]
    return nx.mul(nx.sum(nx.log(nx.clamp(probs, LOG_CLAMP, 1.0))), -1.0 / c)


def compute_loss(cfg: LossConfig, out_a, out_b, head: Callable[[Tensor], Tensor] | None = None) -> Tensor:
    """Route to the configured variant with the representation it expects.

    ``out_a``/``out_b`` are model outputs for the two views (anything with
    ``features``, ``logits`` and ``probs`` attributes).
    """
    kind = LossKind(cfg.kind)
    if kind in (LossKind.FCL, LossKind.NTCL, LossKind.SFCL):
        pair = PairedEmbeddings(out_a.features, out_b.features)
        if kind is LossKind.FCL:
            return fcl_loss(pair, cfg)
        if kind is LossKind.SFCL:
            return sfcl_loss(pair, cfg)
        if head is None:
            raise ConfigError("NTCL needs a projection head")
        return ntcl_loss(pair, head, cfg)
    if kind is LossKind.LCL:
        return lcl_loss(PairedEmbeddings(out_a.logits, out_b.logits), cfg)
    if kind is LossKind.BCE:
        return bce_loss(out_a.probs, out_b.probs, cfg)
    pair = PairedEmbeddings(out_a.probs, out_b.probs)
    if kind is LossKind.PCL:
        return pcl_loss(pair, cfg)
    if kind is LossKind.PCL_L2:
        return pcl_l2_loss(pair, cfg)
    if kind is LossKind.PCL_MSE:
        return pcl_mse_loss(pair, cfg)
    raise ConfigError(f"unhandled loss kind {kind}")  # pragma: no cover


class ProjectionHead:
    """Two-layer d -> d -> d head with a ReLU in between."""

    def __init__(self, dim: int, seed: int | np.random.Generator = 0):
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(dim)
        self.w1 = Tensor(rng.uniform(-bound, bound, (dim, dim)), requires_grad=True)
        self.b1 = Tensor(rng.uniform(-bound, bound, dim), requires_grad=True)
        self.w2 = Tensor(rng.uniform(-bound, bound, (dim, dim)), requires_grad=True)
        self.b2 = Tensor(rng.uniform(-bound, bound, dim), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        h = nx.relu(nx.add_row(nx.matmul(x, self.w1), self.b1))
        return nx.add_row(nx.matmul(h, self.w2), self.b2)

"""Seeded planar domain-shift problems and two-view augmentation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError

SOURCE = "source"
TARGET = "target"


@dataclass(frozen=True)
class ShiftSpec:
    """Affine map ``scale * R(rotation) @ x + translation`` plus target noise."""

    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    noise_sigma: float = 0.35

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        if len(self.translation) != 2:
            raise ConfigError("translation must be a 2-vector")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        return self.scale * pts @ rot.T + np.asarray(self.translation)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation,
            "translation": list(self.translation),
            "scale": self.scale,
            "noise_sigma": self.noise_sigma,
        }


IDENTITY_SHIFT = ShiftSpec()
DEFAULT_SHIFT = ShiftSpec(rotation=0.6, translation=(1.0, 0.5), scale=1.0, noise_sigma=0.35)


@dataclass
class DomainDataset:
    """Points with class labels tagged by domain.

    Target labels are stored but not handed out through :attr:`labels`;
    training code reads them only via :meth:`few_shot_labels`, and
    evaluation code calls :meth:`ground_truth` explicitly.
    """

    points: np.ndarray
    _labels: np.ndarray = field(repr=False)
    domain_tag: str
    num_classes: int

    def __len__(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> np.ndarray:
        if self.domain_tag != SOURCE:
            raise ContractError("target labels are evaluation-only; use few_shot_labels() or ground_truth()")
        return self._labels

    def few_shot_labels(self, split: FewShotSplit) -> np.ndarray:
        return self._labels[split.indices]

    def ground_truth(self) -> np.ndarray:
        return self._labels

    def to_csv(self, path) -> None:
        write_datasets_csv(path, [self])


@dataclass(frozen=True)
class FewShotSplit:
    shots_per_class: int
    indices: np.ndarray


def _class_centers(c: int, radius: float) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(c) / c
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_domain_pair(
    c: int,
    n_per_class: int,
    shift: ShiftSpec,
    seed: int,
    radius: float = 2.0,
    source_sigma: float = 0.35,
) -> tuple[DomainDataset, DomainDataset]:
    """Gaussian blobs on a circle (source) and their shifted copy (target).

    Source blob c is centred at angle ``2*pi*c/C`` on a circle of ``radius``
    with isotropic noise ``source_sigma``. Target blobs are the source centres
    mapped through ``shift`` with fresh noise of ``shift.noise_sigma``.
    """
    if c < 2 or n_per_class < 1:
        raise ConfigError(f"need c >= 2 and n_per_class >= 1, got {c}, {n_per_class}")
    if radius <= 0 or source_sigma < 0:
        raise ConfigError("radius must be positive and source_sigma nonnegative")
    rng_src, rng_tgt = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    centers = _class_centers(c, radius)
    labels = np.repeat(np.arange(c), n_per_class)

    src = centers[labels] + source_sigma * rng_src.standard_normal((len(labels), 2))
    tgt = shift.apply(centers)[labels] + shift.noise_sigma * rng_tgt.standard_normal((len(labels), 2))
    return (
        DomainDataset(src, labels.copy(), SOURCE, c),
        DomainDataset(tgt, labels.copy(), TARGET, c),
    )


def make_few_shot_split(target: DomainDataset, shots_per_class: int, seed: int) -> FewShotSplit:
    if shots_per_class < 0:
        raise ConfigError("shots_per_class must be >= 0")
    rng = np.random.default_rng(seed)
    truth = target.ground_truth()
    picked = []
    for k in range(target.num_classes):
        members = np.flatnonzero(truth == k)
        if len(members) < shots_per_class:
            raise ConfigError(f"class {k} has only {len(members)} points for {shots_per_class} shots")
        picked.append(np.sort(rng.choice(members, size=shots_per_class, replace=False)))
    idx = np.concatenate(picked) if picked else np.zeros(0, dtype=np.intp)
    return FewShotSplit(shots_per_class, idx.astype(np.intp))


def _rotate(points: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    x, y = points[:, 0], points[:, 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=1)


def _perturb(points: np.ndarray, jitter: float, max_angle: float, rng: np.random.Generator) -> np.ndarray:
    angles = rng.uniform(-max_angle, max_angle, len(points))
    return _rotate(points, angles) + jitter * rng.standard_normal(points.shape)


def augment_two_views(points, strength: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Two independent jitter+rotation views of each point.

    Jitter is Gaussian with sigma ``strength``; rotation about the origin is
    uniform in ``[-strength, strength]`` radians. ``seed`` may be an int or a
    Generator (which is advanced).
    """
    if strength < 0:
        raise ConfigError("strength must be nonnegative")
    pts = np.asarray(points, dtype=np.float64)
    if strength == 0:
        return pts.copy(), pts.copy()
    rng = np.random.default_rng(seed)
    return _perturb(pts, strength, strength, rng), _perturb(pts, strength, strength, rng)


def strong_augment(points, strength: float, seed, mask_prob: float = 0.1) -> np.ndarray:
    """Heavier view for pseudo-labelling: 3x jitter plus random coordinate zeroing."""
    if strength < 0 or not 0.0 <= mask_prob <= 1.0:
        raise ConfigError("strength must be >= 0 and mask_prob in [0, 1]")
    pts = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = _perturb(pts, 3.0 * strength, strength, rng) if strength > 0 else pts.copy()
    if mask_prob > 0:
        out = np.where(rng.random(out.shape) < mask_prob, 0.0, out)
    return out


@dataclass
class Benchmark:
    source: DomainDataset
    target: DomainDataset
    split: FewShotSplit


def make_benchmark(
    classes: int = 4,
    n_per_class: int = 50,
    shots: int = 3,
    shift: ShiftSpec = DEFAULT_SHIFT,
    seed: int = 0,
    radius: float = 2.0,
    source_sigma: float = 0.35,
) -> Benchmark:
    source, target = make_domain_pair(classes, n_per_class, shift, seed, radius=radius, source_sigma=source_sigma)
    split = make_few_shot_split(target, shots, seed=np.random.SeedSequence(seed).spawn(3)[2])
    return Benchmark(source, target, split)


DATASET_COLUMNS = ("x", "y", "label", "domain")


def write_datasets_csv(path, datasets) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_COLUMNS)
        for ds in datasets:
            for (x, y), lab in zip(ds.points, ds.ground_truth()):
                w.writerow([repr(float(x)), repr(float(y)), int(lab), ds.domain_tag])

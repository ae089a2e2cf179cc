"""
A planar domain-shift problem
=============================

Four Gaussian blobs sit on a circle (the source domain). The target
domain is the same blobs after a rotation and a translation. Only three
target points per class come with labels.
"""

import sys
from pathlib import Path

import numpy as np

from pclab import DEFAULT_SHIFT, IDENTITY_SHIFT, augment_two_views, make_benchmark, strong_augment
from pclab.synthdata import write_datasets_csv

data = make_benchmark(seed=0)
print(f"source: {len(data.source)} points, target: {len(data.target)} points")
print("shift:", DEFAULT_SHIFT)

# Target labels are guarded. Training code can read the few-shot subset...
print("few-shot target labels:", data.target.few_shot_labels(data.split))
# ...but not the whole set through the same door.
try:
    data.target.labels
except Exception as exc:  # ContractError
    print("data.target.labels ->", type(exc).__name__)

# Class centroids before and after the shift
for k in range(4):
    s = data.source.points[data.source.labels == k].mean(0)
    t = data.target.points[data.target.ground_truth() == k].mean(0)
    print(f"class {k}: source centroid {np.round(s, 2)}  target centroid {np.round(t, 2)}")

# With no shift the two domains are draws from one distribution.
same = make_benchmark(seed=0, shift=IDENTITY_SHIFT)
gap = np.linalg.norm(same.source.points.mean(0) - same.target.points.mean(0))
print(f"identity shift, distance between domain means: {gap:.3f}")

# Augmentation: two jittered, slightly rotated views of the same points,
# and a heavier view with some coordinates zeroed.
pts = data.target.points[:3]
a, b = augment_two_views(pts, 0.1, seed=1)
print("point      ", pts[0].round(3))
print("view a / b ", a[0].round(3), b[0].round(3))
print("strong view", strong_augment(pts, 0.1, seed=1, mask_prob=0.5)[0].round(3))

# Dump everything for plotting elsewhere
out = Path(sys.argv[1] if len(sys.argv) > 1 else "domain_shift.csv")
write_datasets_csv(out, [data.source, data.target])
print("wrote", out)

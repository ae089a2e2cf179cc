"""
Why inner products of probability vectors like one-hot rows
===========================================================

For two probability vectors p and q, p.q <= 1, with equality only when
both are the same one-hot vector. So a contrastive loss that rewards a
large p.q between two views pushes predictions towards one-hot. This
script looks at that bound and then at what plain gradient descent on
the loss actually does.
"""

import math

import numpy as np

from pclab import LossConfig, PairedEmbeddings, pcl_loss, uniformity_regularizer
from pclab.checks import free_parameter_descent
from pclab.numerics import Tensor

rng = np.random.default_rng(0)

# %%
# The bound, empirically
# ----------------------
# Sharper Dirichlet draws (small alpha) get closer to one-hot and their
# self inner product climbs towards 1. Nothing ever crosses it.
for alpha in (10.0, 1.0, 0.1, 0.01):
    p = rng.dirichlet(np.full(4, alpha), size=2000)
    print(f"alpha={alpha:5}: mean p.p = {np.mean((p * p).sum(1)):.3f}, max = {(p * p).sum(1).max():.6f}")

# %%
# Closed forms
# ------------
# With every row uniform, each positive and each negative score the same,
# so the per-sample loss is log of the number of candidates, 2N - 1.
for n in (2, 4, 8):
    u = Tensor(np.full((n, 4), 0.25))
    val = pcl_loss(PairedEmbeddings(u, u), LossConfig()).item()
    print(f"N={n}: loss {val:.6f}  log(2N-1) = {math.log(2 * n - 1):.6f}")
print("uniformity term on a uniform row, C=4:", uniformity_regularizer(Tensor(np.full((1, 4), 0.25))).item(), "vs log 4 =", math.log(4))

# %%
# Descent on free logits
# ----------------------
# Eight pairs, four classes. Each sample owns its logits directly; no
# network in between. The mean max-probability shows how one-hot the
# rows become. A feature-space loss with a random softmax read-out is
# the comparison.
for seed in range(3):
    pcl = free_parameter_descent("PCL", seed)
    fcl = free_parameter_descent("FCL", seed)
    print(f"seed {seed}: probability loss -> {pcl:.3f}   feature loss -> {fcl:.3f}")

# With 8 samples and only 4 classes, perfect one-hot rows would make
# different samples collide on the same class, and every collision is a
# negative pair with similarity 1. Descent instead settles on a mixture
# of one-hot rows and two-class midpoints, so the max-probability stalls
# near 0.8 rather than reaching 1.

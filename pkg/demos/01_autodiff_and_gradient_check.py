"""
Reverse-mode gradients and how to trust them
============================================

Every loss in pclab is built from a handful of tensor ops on a tape.
Here we differentiate a small expression by hand, compare it with the
tape, and then let the finite-difference checker do the same job.
"""

import numpy as np

from pclab import numerics as nx
from pclab.numerics import Tensor

# A Tensor wraps a float64 array. Ask for gradients explicitly.
x = Tensor(np.array([[0.5, -1.0, 2.0]]), requires_grad=True)

# f(x) = sum(softmax(x) * [1, 2, 3]), the expected "index" under softmax
weights = Tensor(np.array([[1.0, 2.0, 3.0]]))
f = nx.sum(nx.mul(nx.softmax_rows(x), weights))
f.backward()

# By hand: df/dx_k = p_k * (w_k - sum_j p_j w_j)
p = np.exp(x.data) / np.exp(x.data).sum()
by_hand = p * (weights.data - (p * weights.data).sum())
print("tape   :", x.grad.ravel())
print("by hand:", by_hand.ravel())

# The checker perturbs every coordinate by +-h and reports the worst
# relative disagreement with the tape.
err = nx.finite_diff_check(lambda t: nx.sum(nx.mul(nx.softmax_rows(t), weights)), x.data, h=1e-5)
print(f"finite-difference relative error: {err:.2e}")

# A tensor used twice gets the sum of both contributions.
y = Tensor(np.array(3.0), requires_grad=True)
nx.add(nx.mul(y, y), nx.mul(y, 4.0)).backward()
print("d/dy (y^2 + 4y) at y=3:", y.grad, "(expected 10)")

# The tape itself is inspectable: nodes come back in the order backward visits them.
z = Tensor(np.ones((2, 2)), requires_grad=True)
loss = nx.mean(nx.tanh(nx.matmul(z, z)))
tape = nx.GradTape.record(loss)
print("ops on tape:", [node._op or "leaf" for node in tape.nodes])

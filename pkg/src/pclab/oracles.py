"""Direct-summation reference implementations.

Plain Python loops over lists of floats, using only :mod:`math`. They share
no code with the tensor path and exist to cross-check it.
"""

from __future__ import annotations

import math

Rows = list[list[float]]


def _rows(x) -> Rows:
    if hasattr(x, "requires_grad"):  # a Tensor
        x = x.data
    return [[float(v) for v in row] for row in x]


def dot(u, v) -> float:
    return math.fsum(a * b for a, b in zip(u, v))


def normalize(u) -> list[float]:
    n = math.sqrt(math.fsum(a * a for a in u))
    return [a / n for a in u]


def softmax(row) -> list[float]:
    m = max(row)
    e = [math.exp(v - m) for v in row]
    t = math.fsum(e)
    return [v / t for v in e]


def neg_sq_dist(u, v) -> float:
    return -math.fsum((a - b) ** 2 for a, b in zip(u, v))


def matmul(a, b) -> Rows:
    a, b = _rows(a), _rows(b)
    inner, cols = len(b), len(b[0]) if b else 0
    return [[math.fsum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)] for i in range(len(a))]


def info_nce(a, b, scale, symmetrize=True, sim=dot, drop_above=None) -> float:
    a, b = _rows(a), _rows(b)

    def one_way(q, k):
        n = len(q)
        total = 0.0
        for i in range(n):
            pos = math.exp(scale * sim(q[i], k[i]))
            denom = 0.0
            for j in range(n):
                if j == i:
                    continue
                s = sim(q[i], q[j])
                if drop_above is not None and s > drop_above:
                    continue
                denom += math.exp(scale * s)
            for j in range(n):
                s = sim(q[i], k[j])
                if j != i and drop_above is not None and s > drop_above:
                    continue
                denom += math.exp(scale * s)
            total += -math.log(pos / denom)
        return total / n

    fwd = one_way(a, b)
    if not symmetrize:
        return fwd
    return 0.5 * (fwd + one_way(b, a))


def fcl(a, b, scale, symmetrize=True) -> float:
    return info_nce([normalize(r) for r in _rows(a)], [normalize(r) for r in _rows(b)], scale, symmetrize)


def sfcl(a, b, scale, threshold, symmetrize=True) -> float:
    return info_nce(
        [normalize(r) for r in _rows(a)], [normalize(r) for r in _rows(b)], scale, symmetrize, drop_above=threshold
    )


def pcl(p, q, scale, symmetrize=True) -> float:
    return info_nce(p, q, scale, symmetrize)


def pcl_mse(p, q, scale, symmetrize=True) -> float:
    return info_nce(p, q, scale, symmetrize, sim=neg_sq_dist)


def bce(p0, p1, threshold, clamp=1e-12) -> float:
    views = [_rows(p0), _rows(p1)]
    n = len(views[0])
    total = 0.0
    for vi in range(2):
        for vj in range(2):
            for i in range(n):
                for j in range(n):
                    p = dot(views[vi][i], views[vj][j])
                    y = 1.0 if (p >= threshold or i == j) else 0.0
                    pc = min(max(p, clamp), 1.0)
                    qc = min(max(1.0 - p, clamp), 1.0)
                    total -= y * math.log(pc) + (1.0 - y) * math.log(qc)
    return total


def uniformity(p, clamp=1e-12) -> float:
    rows = _rows(p)
    total = 0.0
    for row in rows:
        c = len(row)
        for v in row:
            total -= math.log(min(max(v, clamp), 1.0)) / c
    return total


def cross_entropy(p, labels, clamp=1e-12) -> float:
    rows = _rows(p)
    return math.fsum(-math.log(min(max(rows[i][int(y)], clamp), 1.0)) for i, y in enumerate(labels)) / len(rows)


def pseudo_label(weak, strong, confidence, clamp=1e-12) -> tuple[float, int]:
    weak, strong = _rows(weak), _rows(strong)
    total, kept = 0.0, 0
    for w, s in zip(weak, strong):
        top = max(w)
        if top < confidence:
            continue
        y = w.index(top)
        total += -math.log(min(max(s[y], clamp), 1.0))
        kept += 1
    return total / len(weak), kept

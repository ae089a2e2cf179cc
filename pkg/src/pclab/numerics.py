"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad=True`` records a
node holding its parents and a closure mapping the output gradient to one
gradient per parent. ``backward`` collects the nodes reachable from a scalar
into a :class:`GradTape` (reverse topological order) and replays it.

Broadcasting is deliberately narrow: a binary elementwise op accepts two
tensors of identical shape, or a tensor and a 0-d scalar. Anything else
raises :class:`DimensionError`. Row-wise bias addition is its own op
(:func:`add_row`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError, ContractError

EPS_NORM = 1e-12

__all__ = [
    "EPS_NORM",
    "Tensor",
    "GradTape",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "relu",
    "tanh",
    "sum",
    "mean",
    "transpose",
    "matmul",
    "add_row",
    "softmax_rows",
    "l2_normalize",
    "logsumexp_rows",
    "diagonal",
    "concat",
    "take_rows",
    "pick",
    "clamp",
    "sq_dist",
    "backward",
    "finite_diff_check",
]


class Tensor:
    """A float64 array that can take part in gradient computation."""

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, _op: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = _backward
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    __add__ = lambda self, o: add(self, o)  # noqa: E731
    __radd__ = lambda self, o: add(o, self)  # noqa: E731
    __sub__ = lambda self, o: sub(self, o)  # noqa: E731
    __rsub__ = lambda self, o: sub(o, self)  # noqa: E731
    __mul__ = lambda self, o: mul(self, o)  # noqa: E731
    __rmul__ = lambda self, o: mul(o, self)  # noqa: E731
    __truediv__ = lambda self, o: div(self, o)  # noqa: E731
    __rtruediv__ = lambda self, o: div(o, self)  # noqa: E731
    __matmul__ = lambda self, o: matmul(self, o)  # noqa: E731
    __neg__ = lambda self: neg(self)  # noqa: E731


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn, _op=op)
    return Tensor(data)


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _fit(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only the scalar-vs-tensor case can get here with a shape mismatch
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (_fit(g * bd, a.shape), _fit(g * ad, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return _fit(g / bd, a.shape), _fit(-g * ad / (bd * bd), b.shape)

    return _node(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")
    x = a.data
    return _node(np.log(x), (a,), lambda g: (g / x,), "log")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    on = a.data > 0.0
    return _node(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,), "relu")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; the gradient is zero where clipping is active."""
    a = _as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp")


# --------------------------------------------------------------------------
# reductions and layout
# --------------------------------------------------------------------------


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = _as_tensor(a)
    shape = a.shape
    # full reductions feed scalar losses; round them once so finite-difference
    # checks see the function and not summation noise
    out = np.float64(math.fsum(a.data.ravel())) if axis is None else a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(out, (a,), bw, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ContractError("mean over an empty axis")
    return mul(sum(a, axis), 1.0 / n)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _node(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def add_row(a, row) -> Tensor:
    """Add a length-n vector to every row of an (m, n) matrix."""
    a, row = _as_tensor(a), _as_tensor(row)
    if a.ndim != 2 or row.shape != (a.shape[1],):
        raise DimensionError(f"add_row: row of shape {row.shape} does not fit matrix {a.shape}")
    return _node(a.data + row.data, (a, row), lambda g: (g, g.sum(axis=0)), "add_row")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of nothing")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def take_rows(a, index) -> Tensor:
    a = _as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _node(a.data[idx], (a,), bw, "take_rows")


def pick(a, columns) -> Tensor:
    """Select ``a[i, columns[i]]`` for every row i."""
    a = _as_tensor(a)
    cols = np.asarray(columns, dtype=np.intp)
    if a.ndim != 2 or cols.shape != (a.shape[0],):
        raise DimensionError(f"pick: {cols.shape} indices for matrix {a.shape}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[rows, cols] = g
        return (full,)

    return _node(a.data[rows, cols], (a,), bw, "pick")


def diagonal(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"diagonal expects a square matrix, got {a.shape}")
    return _node(np.diag(a.data).copy(), (a,), lambda g: (np.diag(g),), "diagonal")


# --------------------------------------------------------------------------
# fused row-wise ops
# --------------------------------------------------------------------------


def softmax_rows(logits) -> Tensor:
    x = _as_tensor(logits)
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got {x.shape}")
    z = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    p = z / z.sum(axis=1, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _node(p, (x,), bw, "softmax_rows")


def l2_normalize(v) -> Tensor:
    v = _as_tensor(v)
    if v.ndim != 2:
        raise DimensionError(f"l2_normalize expects a matrix, got {v.shape}")
    norms = np.sqrt((v.data * v.data).sum(axis=1, keepdims=True))
    if np.any(norms <= EPS_NORM):
        raise DegenerateInputError(f"row norm at or below {EPS_NORM}; cannot normalize")
    y = v.data / norms

    def bw(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _node(y, (v,), bw, "l2_normalize")


def logsumexp_rows(x, mask=None) -> Tensor:
    """Row-wise log-sum-exp over the entries where ``mask`` is True."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"logsumexp_rows expects a matrix, got {x.shape}")
    keep = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if keep.shape != x.shape:
        raise DimensionError(f"mask shape {keep.shape} does not match {x.shape}")
    if not keep.any(axis=1).all():
        raise ContractError("logsumexp_rows: a row has every entry masked out")
    masked = np.where(keep, x.data, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    z = np.where(keep, np.exp(masked - m), 0.0)
    tot = z.sum(axis=1, keepdims=True)
    out = (m + np.log(tot))[:, 0]
    w = z / tot

    return _node(out, (x,), lambda g: (w * g[:, None],), "logsumexp_rows")


def sq_dist(a, b) -> Tensor:
    """Pairwise squared Euclidean distances between rows of a and rows of b."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"sq_dist: incompatible {a.shape} and {b.shape}")
    diff = a.data[:, None, :] - b.data[None, :, :]
    out = (diff * diff).sum(axis=2)

    def bw(g):
        gd = 2.0 * g[:, :, None] * diff
        return gd.sum(axis=1), -gd.sum(axis=0)

    return _node(out, (a, b), bw, "sq_dist")


# --------------------------------------------------------------------------
# reverse pass
# --------------------------------------------------------------------------


@dataclass
class GradTape:
    """Nodes reachable from a root, in the order the reverse pass visits them."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def record(cls, root: Tensor) -> GradTape:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        order.reverse()
        return cls(order)

    def replay(self, seed: np.ndarray) -> None:
        if not self.nodes:
            return
        grads: dict[int, np.ndarray] = {id(self.nodes[0]): seed}
        for node in self.nodes:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every grad-requiring tensor that feeds ``loss``."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    GradTape.record(loss).replay(np.ones(loss.shape))


def finite_diff_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Largest relative disagreement between autodiff and central differences.

    Per coordinate the error is ``|a - c| / (|a| + |c| + 1e-12)``.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    probe = Tensor(x0, requires_grad=True)
    out = f(probe)
    backward(out)
    analytic = np.zeros_like(x0) if probe.grad is None else probe.grad

    central = np.empty_like(x0)
    flat = central.reshape(-1)
    for k in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[k] += h
        xm[k] -= h
        fp = f(Tensor(xp.reshape(x0.shape))).item()
        fm = f(Tensor(xm.reshape(x0.shape))).item()
        flat[k] = (fp - fm) / (2.0 * h)

    err = np.abs(analytic - central) / (np.abs(analytic) + np.abs(central) + 1e-12)
    return float(err.max()) if err.size else 0.0

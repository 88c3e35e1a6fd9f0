"""Reverse-mode autodiff over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional adjoint of the same shape.  Ops
build a tape of parent links; backward() walks the tape once per call and
adds dloss/dnode into every node that tracks gradients, so repeated calls
accumulate.  Values are treated as immutable once an op has consumed them;
the optimizer mutates parameter values in place only between tapes.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import DegenerateInputError, NumericError, ShapeMismatchError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """values (ndarray, float64) + adjoint in .grad when requires_grad."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_bw")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad = np.zeros_like(self.values) if self.requires_grad else None
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _from_op(values: np.ndarray, parents, bw) -> Tensor:
    """Wrap an op result; record the tape edge only when a parent needs it."""
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._bw = bw
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def bw(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _from_op(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values

    def bw(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _from_op(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values

    def bw(g):
        return (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        )

    return _from_op(out, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.values / b.values

    def bw(g):
        return (
            _unbroadcast(g / b.values, a.values.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape),
        )

    return _from_op(out, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.values, 0.0)
    mask = a.values > 0.0  # subgradient 0 at the kink

    def bw(g):
        return (g * mask,)

    return _from_op(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _from_op(out, (a,), bw)


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p.  Non-integer p requires a positive base."""
    out = a.values**p

    def bw(g):
        return (g * p * a.values ** (p - 1.0),)

    return _from_op(out, (a,), bw)


# --- matrix products --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a (n, m) @ b (m, k) -> (n, k)."""
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeMismatchError(
            f"matmul needs 2-d operands, got {a.values.shape} and {b.values.shape}"
        )
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dims differ: {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values

    def bw(g):
        return g @ b.values.T, a.values.T @ g

    return _from_op(out, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product: a (B, n, m) @ b (B, m, k) -> (B, n, k)."""
    if a.values.ndim != 3 or b.values.ndim != 3:
        raise ShapeMismatchError(
            f"bmm needs 3-d operands, got {a.values.shape} and {b.values.shape}"
        )
    if a.values.shape[0] != b.values.shape[0] or a.values.shape[2] != b.values.shape[1]:
        raise ShapeMismatchError(
            f"bmm shapes incompatible: {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values

    def bw(g):
        return g @ b.values.swapaxes(-1, -2), a.values.swapaxes(-1, -2) @ g

    return _from_op(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes (ndim >= 2)."""
    if a.values.ndim < 2:
        raise ShapeMismatchError(f"transpose needs ndim >= 2, got {a.values.shape}")
    out = a.values.swapaxes(-1, -2)

    def bw(g):
        return (g.swapaxes(-1, -2),)

    return _from_op(out, (a,), bw)


# --- shape and indexing -----------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out = a.values.reshape(shape)

    def bw(g):
        return (g.reshape(a.values.shape),)

    return _from_op(out, (a,), bw)


def gather_rows(a: Tensor, idx) -> Tensor:
    """a (n, d), idx (k,) int -> (k, d); duplicate rows accumulate on backward."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"gather_rows needs a 2-d tensor, got {a.values.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = a.values[idx]

    def bw(g):
        ga = np.zeros_like(a.values)
        np.add.at(ga, idx, g)
        return (ga,)

    return _from_op(out, (a,), bw)


def gather_cols(a: Tensor, idx) -> Tensor:
    """a (n, d), idx (k,) int -> (n, k)."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"gather_cols needs a 2-d tensor, got {a.values.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = a.values[:, idx]

    def bw(g):
        ga = np.zeros_like(a.values)
        np.add.at(ga.T, idx, g.T)  # scatter-add per column through the view
        return (ga,)

    return _from_op(out, (a,), bw)


def concat_rows(parts) -> Tensor:
    """Stack 2-d tensors along axis 0."""
    parts = list(parts)
    for p in parts:
        if p.values.ndim != 2:
            raise ShapeMismatchError(f"concat_rows needs 2-d tensors, got {p.values.shape}")
    out = np.concatenate([p.values for p in parts], axis=0)
    sizes = [p.values.shape[0] for p in parts]

    def bw(g):
        grads, at = [], 0
        for n in sizes:
            grads.append(g[at : at + n])
            at += n
        return tuple(grads)

    return _from_op(out, tuple(parts), bw)


# --- reductions -------------------------------------------------------------


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries -> scalar tensor, shape ()."""
    out = np.asarray(a.values.sum())

    def bw(g):
        return (np.broadcast_to(g, a.values.shape).copy(),)

    return _from_op(out, (a,), bw)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.values.shape).copy(),)

    return _from_op(out, (a,), bw)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.values.shape[axis]
    out = a.values.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.values.shape).copy() / n,)

    return _from_op(out, (a,), bw)


# --- normalizers and loss ---------------------------------------------------


def softmax_rows(a: Tensor) -> Tensor:
    """Row softmax of a (n, d), stabilized by max subtraction."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"softmax_rows needs a 2-d tensor, got {a.values.shape}")
    z = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _from_op(out, (a,), bw)


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row of a (n, d) to unit euclidean norm."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(
            f"l2_normalize_rows needs a 2-d tensor, got {a.values.shape}"
        )
    norms = np.sqrt((a.values * a.values).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot l2-normalize a zero row")
    out = a.values / norms

    def bw(g):
        dot = (g * a.values).sum(axis=1, keepdims=True)
        return (g / norms - a.values * dot / norms**3,)

    return _from_op(out, (a,), bw)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy.  logits (b, w), labels (b,) int -> scalar."""
    if logits.values.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy needs 2-d logits, got {logits.values.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    b, w = logits.values.shape
    if labels.shape != (b,):
        raise ShapeMismatchError(f"labels shape {labels.shape} does not match batch {b}")
    if np.any(labels < 0) or np.any(labels >= w):
        raise IndexError(f"labels must lie in [0, {w})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    out = np.asarray((lse - z[np.arange(b), labels]).mean())
    probs = np.exp(z - lse[:, None])

    def bw(g):
        gl = probs.copy()
        gl[np.arange(b), labels] -= 1.0
        return (gl * (g / b),)

    return _from_op(out, (logits,), bw)


# --- backward pass ----------------------------------------------------------


def _topo_order(root: Tensor):
    """Parents-first postorder over the recorded tape."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Add dloss/dnode into .grad of every gradient-tracking node."""
    if loss.values.size != 1:
        raise ShapeMismatchError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    if not np.isfinite(loss.values):
        raise NumericError("loss is not finite")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    flows = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = flows.pop(id(node), None)
        if g is None:
            continue
        if node.grad is not None:
            node.grad += g
        if node._bw is None:
            continue
        for parent, pg in zip(node._parents, node._bw(g)):
            if pg is None or not parent.requires_grad:
                continue
            held = flows.get(id(parent))
            flows[id(parent)] = pg if held is None else held + pg

"""Reverse-mode differentiation over dense float64 matrices.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the upstream gradient to one gradient per parent.
``backward`` walks the recorded graph once in reverse topological order.
Constant operands (sparse adjacency, raw features) are plain arrays and
never receive gradients.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced in forward pass")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._consumed = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``."""
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise TapeError("this tape was already differentiated; rebuild the forward pass")
    if not loss.requires_grad:
        raise TapeError("loss does not depend on any tensor requiring gradients")

    order = []
    seen = set()
    stack = [(loss, False)]
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

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    loss._consumed = True


# elementwise and linear algebra -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), back)


def spmm(op, x: Tensor) -> Tensor:
    """``op @ x`` for a constant (sparse or dense) operator ``op``."""
    x = _as_tensor(x)
    if op.shape[1] != x.shape[0]:
        raise ValueError(f"spmm shape mismatch {op.shape} @ {x.shape}")
    out = op @ x.data
    op_t = op.T
    return _result(np.asarray(out), (x,), lambda g: (np.asarray(op_t @ g),))


def elementwise_abs(x: Tensor) -> Tensor:
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * factor, (x,), lambda g: (g * factor,))


def dropout(x: Tensor, rate: float, rng=None, training: bool = True) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def concat_cols(parts: list) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    widths = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        return tuple(g[:, widths[k]:widths[k + 1]] for k in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), back)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        scatter = sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n, len(idx)))
        return (np.asarray(scatter @ g),)

    return _result(x.data[idx], (x,), back)


def segment_sum(x: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``x`` that share a segment id."""
    seg = np.asarray(seg, dtype=np.int64)
    inc = sp.csr_matrix((np.ones(len(seg)), (seg, np.arange(len(seg)))), shape=(num_segments, len(seg)))
    return _result(np.asarray(inc @ x.data), (x,), lambda g: (g[seg],))


def segment_softmax(scores: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a column of scores within each segment."""
    if scores.shape[1] != 1:
        raise ValueError("segment_softmax expects a single column of scores")
    seg = np.asarray(seg, dtype=np.int64)
    s = scores.data[:, 0]
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, s)
    e = np.exp(s - seg_max[seg])
    denom = np.bincount(seg, weights=e, minlength=num_segments)
    y = (e / denom[seg])[:, None]

    def back(g):
        inner = np.bincount(seg, weights=(y * g)[:, 0], minlength=num_segments)
        return (y * (g - inner[seg][:, None]),)

    return _result(y, (scores,), back)


# reductions ---------------------------------------------------------------------

def sum_(x: Tensor) -> Tensor:
    return _result(np.array([[x.data.sum()]]), (x,), lambda g: (np.full(x.shape, g[0, 0]),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _result(np.array([[x.data.mean()]]), (x,), lambda g: (np.full(x.shape, g[0, 0] / n),))


# softmax family -----------------------------------------------------------------

def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def _log_softmax_array(x: np.ndarray, tau: float) -> np.ndarray:
    y = x / tau
    y = y - y.max(axis=1, keepdims=True)
    return y - np.log(np.exp(y).sum(axis=1, keepdims=True))


def log_softmax(x: Tensor, tau: float = 1.0) -> Tensor:
    _check_tau(tau)
    out = _log_softmax_array(x.data, tau)
    p = np.exp(out)
    return _result(out, (x,), lambda g: ((g - p * g.sum(axis=1, keepdims=True)) / tau,))


def row_softmax(x: Tensor, tau: float = 1.0) -> Tensor:
    _check_tau(tau)
    p = np.exp(_log_softmax_array(x.data, tau))

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)) / tau,)

    return _result(p, (x,), back)


def cross_entropy(logits: Tensor, targets, rows=None) -> Tensor:
    """Mean of -log softmax(logits)[target] over the selected rows."""
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(logits.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("cross_entropy needs at least one selected row")
    if len(targets) == logits.shape[0] and len(rows) != logits.shape[0]:
        targets = targets[rows]
    if len(targets) != len(rows):
        raise ValueError("one target per selected row is required")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise ValueError("target class id out of range")
    logp = _log_softmax_array(logits.data[rows], 1.0)
    value = -logp[np.arange(len(rows)), targets].mean()

    def back(g):
        grad = np.zeros_like(logits.data)
        local = np.exp(logp)
        local[np.arange(len(rows)), targets] -= 1.0
        np.add.at(grad, rows, local * (g[0, 0] / len(rows)))
        return (grad,)

    return _result(np.array([[value]]), (logits,), back)


def kl_rows(p_logits: Tensor, q_logits: Tensor, tau: float = 1.0) -> Tensor:
    """Mean over rows of KL(softmax(p/tau) || softmax(q/tau))."""
    _check_tau(tau)
    p_logits, q_logits = _as_tensor(p_logits), _as_tensor(q_logits)
    if p_logits.shape != q_logits.shape:
        raise ValueError(f"kl_rows shape mismatch {p_logits.shape} vs {q_logits.shape}")
    log_p = _log_softmax_array(p_logits.data, tau)
    log_q = _log_softmax_array(q_logits.data, tau)
    p = np.exp(log_p)
    ratio = log_p - log_q
    rows = p_logits.shape[0]
    per_row = (p * ratio).sum(axis=1)
    value = per_row.mean()

    def back(g):
        c = g[0, 0] / (rows * tau)
        gp = gq = None
        if p_logits.requires_grad:
            gp = c * p * (ratio - per_row[:, None])
        if q_logits.requires_grad:
            gq = -c * (p - np.exp(log_q))
        return gp, gq

    return _result(np.array([[max(value, 0.0)]]), (p_logits, q_logits), back)

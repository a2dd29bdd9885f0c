"""Reverse-mode differentiable operations on 2-D float64 matrices.

Every value is a `Tensor` wrapping a ``(rows, cols)`` numpy array. Operations
build a computation graph; calling :meth:`Tensor.backward` on a 1x1 scalar
runs reverse-mode accumulation into ``.grad`` of every leaf that was created
with ``requires_grad=True``. Everything is float64 and deterministic: the
same inputs produce bit-identical outputs.

The operation set is intentionally small: exactly the layers the models in
this package need (affine, scaled dot-product attention, same-padded 1-D
convolution, layer norm, segment pooling, row repetition, gathers, the
straight-through estimator, and the usual reductions/losses).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ibvq.errors import (
    AlignmentError,
    ConfigError,
    NumericError,
    ShapeError,
    ValidationError,
)

Array = np.ndarray


def _as_matrix(data) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D float64 matrix node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Callable[[], None] | None = None,
    ):
        self.data = _as_matrix(data)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def _accumulate(self, g: Array) -> None:
        # copy on first contribution: g may alias another node's buffer
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode pass from this 1x1 scalar through the graph."""
        if self.data.shape != (1, 1):
            raise ShapeError(f"backward() needs a scalar output, got {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Create a leaf tensor; validates finiteness of external data."""
    t = Tensor(data, requires_grad=requires_grad)
    if not np.all(np.isfinite(t.data)):
        raise NumericError("tensor data contains non-finite entries")
    return t


def constant(data) -> Tensor:
    """A leaf with no gradient path (used for targets and frozen values)."""
    return Tensor(data, requires_grad=False)


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def _child(data: Array, parents: tuple, backward: Callable[[], None] | None) -> Tensor:
    if any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    else:
        out = Tensor(data)
    return out


def _unbroadcast(g: Array, shape: tuple[int, int]) -> Array:
    # Sum gradient over axes that were broadcast in the forward pass.
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    if g.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return g


def _broadcast_ok(a: Tensor, b: Tensor) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast")


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = constant(np.full((1, 1), float(b)))
    _broadcast_ok(a, b)
    out_data = a.data + b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    out = _child(out_data, (a, b), backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_ok(a, b)
    out_data = a.data - b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    out = _child(out_data, (a, b), backward)
    return out


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        out_data = a.data * s

        def backward_scalar():
            if a.requires_grad:
                a._accumulate(out.grad * s)

        out = _child(out_data, (a,), backward_scalar)
        return out

    _broadcast_ok(a, b)
    out_data = a.data * b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    out = _child(out_data, (a, b), backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out = _child(out_data, (a, b), backward)
    return out


def transpose(a: Tensor) -> Tensor:
    def backward():
        if a.requires_grad:
            a._accumulate(out.grad.T)

    out = _child(a.data.T.copy(), (a,), backward)
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out_data = np.where(mask, a.data, 0.0)

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad * mask)

    out = _child(out_data, (a,), backward)
    return out


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad * out_data)

    out = _child(out_data, (a,), backward)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward():
        if a.requires_grad:
            g = out.grad
            dot = (g * y).sum(axis=1, keepdims=True)
            a._accumulate(y * (g - dot))

    out = _child(y, (a,), backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    out_data = np.array([[a.data.sum()]])

    def backward():
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, out.grad[0, 0]))

    out = _child(out_data, (a,), backward)
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.array([[a.data.mean()]])

    def backward():
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, out.grad[0, 0] / n))

    out = _child(out_data, (a,), backward)
    return out


def sqnorm(a: Tensor) -> Tensor:
    """Sum of squared entries as a 1x1 tensor."""
    out_data = np.array([[float(np.sum(a.data * a.data))]])

    def backward():
        if a.requires_grad:
            a._accumulate(2.0 * out.grad[0, 0] * a.data)

    out = _child(out_data, (a,), backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise ShapeError(
            f"layer_norm gain/bias must be 1x{x.cols}, got {gain.shape}/{bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward():
        g = out.grad
        n = x.cols
        if x.requires_grad:
            dxhat = g * gain.data
            term = n * dxhat - dxhat.sum(axis=1, keepdims=True)
            term -= xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
            x._accumulate(inv / n * term)
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=0, keepdims=True))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0, keepdims=True))

    out = _child(out_data, (x, gain, bias), backward)
    return out


def gather_rows(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValidationError("gather_rows needs at least one index")
    if idx.min() < 0 or idx.max() >= table.rows:
        raise ValidationError(
            f"gather index out of range [0, {table.rows}): {int(idx.min())}..{int(idx.max())}"
        )
    out_data = table.data[idx].copy()

    def backward():
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, idx, out.grad)
            table._accumulate(acc)

    out = _child(out_data, (table,), backward)
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValidationError("concat_cols needs at least one part")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError("concat_cols parts must share the row count")
    widths = [p.cols for p in parts]
    out_data = np.hstack([p.data for p in parts])

    def backward():
        g = out.grad
        start = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p._accumulate(g[:, start : start + w])
            start += w

    out = _child(out_data, tuple(parts), backward)
    return out


def _check_edges(edges: Array, total_rows: int) -> None:
    if edges.ndim != 1 or edges.size < 2:
        raise AlignmentError("edges must be a 1-D array with at least two entries")
    if edges[0] != 0 or edges[-1] != total_rows:
        raise AlignmentError(
            f"edges must span [0, {total_rows}], got [{edges[0]}, {edges[-1]}]"
        )
    if np.any(np.diff(edges) <= 0):
        raise AlignmentError("edges must be strictly increasing")


def segment_mean(x: Tensor, edges, weights=None) -> Tensor:
    """Weighted mean of row segments.

    ``edges`` has S+1 entries delimiting S half-open segments over the rows
    of ``x``; segment s is the (weighted) mean of its member rows. Weights
    default to 1 per row, which makes this plain average pooling.
    """
    edges = np.asarray(edges, dtype=np.int64)
    _check_edges(edges, x.rows)
    if weights is None:
        w = np.ones(x.rows)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != x.rows:
            raise ShapeError(f"weights length {w.size} != rows {x.rows}")
        if np.any(w <= 0):
            raise ValidationError("segment weights must be positive")
    n_seg = edges.size - 1
    seg_w = np.add.reduceat(w, edges[:-1])
    sums = np.add.reduceat(x.data * w[:, None], edges[:-1], axis=0)
    out_data = sums / seg_w[:, None]

    def backward():
        if x.requires_grad:
            g_per_row = np.repeat(out.grad / seg_w[:, None], np.diff(edges), axis=0)
            x._accumulate(g_per_row * w[:, None])

    out = _child(out_data, (x,), backward)
    assert out.rows == n_seg
    return out


def repeat_rows(x: Tensor, counts) -> Tensor:
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    if counts.size != x.rows:
        raise ShapeError(f"counts length {counts.size} != rows {x.rows}")
    if np.any(counts < 1):
        raise ValidationError("repeat counts must all be >= 1")
    out_data = np.repeat(x.data, counts, axis=0)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    def backward():
        if x.requires_grad:
            x._accumulate(np.add.reduceat(out.grad, starts, axis=0))

    out = _child(out_data, (x,), backward)
    return out


def unfold_rows(x: Tensor, width: int) -> Tensor:
    """Stack each row's ``width``-wide neighborhood (zero padded) into one row.

    Output row t is the concatenation x[t-h], ..., x[t+h] for h = width // 2,
    so a matmul against a (width*C, C_out) kernel is a same-padded 1-D
    convolution over the row sequence.
    """
    if width % 2 == 0 or width < 1:
        raise ConfigError(f"unfold width must be odd and positive, got {width}")
    h = width // 2
    t, c = x.shape
    padded = np.zeros((t + 2 * h, c))
    padded[h : h + t] = x.data
    blocks = [padded[k : k + t] for k in range(width)]
    out_data = np.hstack(blocks)

    def backward():
        if x.requires_grad:
            g = out.grad
            acc = np.zeros((t + 2 * h, c))
            for k in range(width):
                acc[k : k + t] += g[:, k * c : (k + 1) * c]
            x._accumulate(acc[h : h + t])

    out = _child(out_data, (x,), backward)
    return out


def straight_through(x: Tensor, values: Array) -> Tensor:
    """Forward the given values; pass upstream gradients to ``x`` unchanged."""
    values = _as_matrix(values)
    if values.shape != x.data.shape:
        raise ShapeError(f"straight_through value shape {values.shape} != {x.shape}")

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad)

    out = _child(values.copy(), (x,), backward)
    return out


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    idx = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if idx.size != n:
        raise ShapeError(f"targets length {idx.size} != logit rows {n}")
    if idx.min() < 0 or idx.max() >= k:
        raise ValidationError(f"target class out of range [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.data.max(axis=1)
    nll = lse - logits.data[np.arange(n), idx]
    out_data = np.array([[nll.mean()]])

    def backward():
        if logits.requires_grad:
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[np.arange(n), idx] -= 1.0
            logits._accumulate(out.grad[0, 0] * probs / n)

    out = _child(out_data, (logits,), backward)
    return out


# ---------------------------------------------------------------------------
# Composite layer operations
# ---------------------------------------------------------------------------


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x @ weight + bias, with the bias row broadcast over rows."""
    if x.cols != weight.rows:
        raise ShapeError(f"affine dimensions differ: x {x.shape} vs W {weight.shape}")
    y = matmul(x, weight)
    if bias is not None:
        if bias.shape != (1, weight.cols):
            raise ShapeError(f"bias must be 1x{weight.cols}, got {bias.shape}")
        y = add(y, bias)
    return y


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention: softmax(q kT / sqrt(d)) v."""
    if q.cols != k.cols:
        raise ShapeError(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.rows != v.rows:
        raise ShapeError(f"key/value row counts differ: {k.shape} vs {v.shape}")
    scores = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(q.cols))
    return matmul(softmax_rows(scores), v)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, *, width: int) -> Tensor:
    """Same-padded 1-D convolution over the row sequence of ``x``.

    The kernel is a (width * C_in, C_out) matrix whose k-th row block applies
    to the neighbor at offset k - width//2; zero padding keeps the output
    length equal to the input length.
    """
    if width % 2 == 0 or width < 1:
        raise ConfigError(f"conv1d width must be odd and positive, got {width}")
    if kernel.rows != width * x.cols:
        raise ShapeError(
            f"kernel rows {kernel.rows} != width*channels {width * x.cols}"
        )
    return affine(unfold_rows(x, width), kernel, bias)


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all entries; target carries no gradient."""
    tgt = target if isinstance(target, Tensor) else constant(target)
    if tgt.shape != pred.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {tgt.shape}")
    diff = sub(pred, tgt)
    return mean_all(mul(diff, diff))


def sinusoid_table(length: int, dim: int) -> Array:
    """Fixed sinusoidal positional-encoding table of shape (length, dim)."""
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(np.float64)

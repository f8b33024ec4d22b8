"""Primitive operations with forward kernels, shape contracts and backward rules.

Public primitives: conv2d, linear, relu, embedding, mean_pool, add, mul,
concat, flatten, softmax_ce, sum, scale. The remaining entries are adjoint
helpers (transposed convolution, weight correlation, matmul, scatter-add, ...)
that exist so every backward rule is again a composition of primitives.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .engine import ShapeError, Tensor, apply, as_tensor, register

PUBLIC = ("conv2d", "linear", "relu", "embedding", "mean_pool", "add", "mul",
          "concat", "flatten", "softmax_ce", "sum", "scale")


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def _axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _broadcast_ok(a: tuple, b: tuple) -> bool:
    try:
        np.broadcast_shapes(a, b)
        return True
    except ValueError:
        return False


def _sum_to_array(x: np.ndarray, shape: tuple) -> np.ndarray:
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and x.shape[lead + i] != 1)
    out = x.sum(axis=axes, keepdims=True) if axes else x
    return out.reshape(shape)


def _maybe_sum_to(g: Tensor, shape: tuple) -> Tensor:
    return g if g.shape == shape else sum_to(g, shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    return apply("add", as_tensor(a), as_tensor(b))


def mul(a, b) -> Tensor:
    return apply("mul", as_tensor(a), as_tensor(b))


def scale(x: Tensor, c: float) -> Tensor:
    return apply("scale", x, c=float(c))


def sub(a, b) -> Tensor:
    return add(a, scale(as_tensor(b), -1.0))


def relu(x: Tensor) -> Tensor:
    return apply("relu", x)


register(
    "add",
    lambda a, b: a + b,
    lambda g, out, a, b: (_maybe_sum_to(g, a.shape), _maybe_sum_to(g, b.shape)),
    lambda a, b: _need(_broadcast_ok(a, b), f"cannot broadcast {a} with {b}"),
)
register(
    "mul",
    lambda a, b: a * b,
    lambda g, out, a, b: (_maybe_sum_to(mul(g, b), a.shape) if a.requires_grad else None,
                          _maybe_sum_to(mul(g, a), b.shape) if b.requires_grad else None),
    lambda a, b: _need(_broadcast_ok(a, b), f"cannot broadcast {a} with {b}"),
)
register(
    "scale",
    lambda x, c: x * c,
    lambda g, out, x, c: (scale(g, c),),
    lambda x, c: None,
)
# subgradient 0 at 0; the mask is a constant, so second derivatives vanish a.e.
register(
    "relu",
    lambda x: np.maximum(x, 0.0),
    lambda g, out, x: (mul(g, Tensor((x.data > 0).astype(np.float64))),),
    lambda x: None,
)


# ------------------------------------------------------------------ reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply("sum", x, axis=None if axis is None else _axes(axis, x.ndim), keepdims=keepdims)


def expand(x: Tensor, shape: tuple, axis) -> Tensor:
    """Adjoint of ``sum``: re-insert reduced ``axis`` and broadcast to ``shape``."""
    return apply("expand", x, shape=tuple(shape), axis=axis)


def sum_to(x: Tensor, shape: tuple) -> Tensor:
    return apply("sum_to", x, shape=tuple(shape))


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    return apply("broadcast_to", x, shape=tuple(shape))


def _sum_shape(x, axis, keepdims):
    if axis is not None:
        _need(all(0 <= a < len(x) for a in axis), f"axis {axis} out of range for {x}")


def _expand_fwd(x, shape, axis, keepdims=False):
    axes = _axes(axis, len(shape))
    if x.ndim != len(shape):
        x = np.expand_dims(x, axes)
    return np.broadcast_to(x, shape).copy()


register(
    "sum",
    lambda x, axis, keepdims: np.asarray(x.sum(axis=axis, keepdims=keepdims)),
    lambda g, out, x, axis, keepdims: (expand(g, x.shape, axis),),
    _sum_shape,
)
register(
    "expand",
    lambda x, shape, axis: _expand_fwd(x, shape, axis),
    lambda g, out, x, shape, axis: (
        sum(g, axis=axis, keepdims=len(x.shape) == len(shape)),),
    lambda x, shape, axis: _need(
        len(x) in (len(shape), len(shape) - len(_axes(axis, len(shape)))),
        f"cannot expand {x} to {shape}"),
    public=False,
)
register(
    "sum_to",
    lambda x, shape: _sum_to_array(x, shape),
    lambda g, out, x, shape: (broadcast_to(g, x.shape),),
    lambda x, shape: _need(_broadcast_ok(x, shape) and np.broadcast_shapes(x, shape) == tuple(x),
                           f"cannot reduce {x} to {shape}"),
    public=False,
)
register(
    "broadcast_to",
    lambda x, shape: np.broadcast_to(x, shape).copy(),
    lambda g, out, x, shape: (sum_to(g, x.shape),),
    lambda x, shape: _need(_broadcast_ok(x, shape) and np.broadcast_shapes(x, shape) == tuple(shape),
                           f"cannot broadcast {x} to {shape}"),
    public=False,
)


# ------------------------------------------------------------- shape movement

def reshape(x: Tensor, shape: tuple) -> Tensor:
    return apply("reshape", x, shape=tuple(shape))


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the first."""
    return apply("flatten", x)


def permute(x: Tensor, axes: tuple) -> Tensor:
    return apply("permute", x, axes=tuple(axes))


def transpose(x: Tensor) -> Tensor:
    return permute(x, (1, 0))


register(
    "reshape",
    lambda x, shape: x.reshape(shape),
    lambda g, out, x, shape: (reshape(g, x.shape),),
    lambda x, shape: _need(int(np.prod(x)) == int(np.prod(shape)), f"cannot reshape {x} to {shape}"),
    public=False,
)
register(
    "flatten",
    lambda x: x.reshape(x.shape[0], -1),
    lambda g, out, x: (reshape(g, x.shape),),
    lambda x: _need(len(x) >= 1, "flatten needs a batch axis"),
)
register(
    "permute",
    lambda x, axes: np.ascontiguousarray(x.transpose(axes)),
    lambda g, out, x, axes: (permute(g, tuple(np.argsort(axes))),),
    lambda x, axes: _need(sorted(axes) == list(range(len(x))), f"bad permutation {axes} for {x}"),
    public=False,
)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    return apply("concat", *xs, axis=axis)


def take(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    return apply("take", x, axis=axis, start=start, stop=stop)


def place(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Adjoint of ``take``: zero tensor of extent ``length`` along ``axis`` holding ``x`` at ``start``."""
    return apply("place", x, axis=axis, start=start, length=length)


def _concat_shape(*shapes, axis):
    _need(len(shapes) >= 1, "concat needs operands")
    nd = len(shapes[0])
    ax = axis % nd
    for s in shapes:
        _need(len(s) == nd and all(s[i] == shapes[0][i] for i in range(nd) if i != ax),
              f"concat operands disagree off axis {axis}: {shapes}")


def _concat_bwd(g, out, *xs, axis):
    parts, start = [], 0
    for x in xs:
        n = x.shape[axis]
        parts.append(take(g, axis, start, start + n))
        start += n
    return tuple(parts)


def _slicer(ndim, axis, start, stop):
    idx = [slice(None)] * ndim
    idx[axis] = slice(start, stop)
    return tuple(idx)


def _place_fwd(x, axis, start, length):
    shape = list(x.shape)
    shape[axis] = length
    out = np.zeros(shape)
    out[_slicer(x.ndim, axis, start, start + x.shape[axis])] = x
    return out


register("concat", lambda *xs, axis: np.concatenate(xs, axis=axis), _concat_bwd, _concat_shape)
register(
    "take",
    lambda x, axis, start, stop: x[_slicer(x.ndim, axis, start, stop)].copy(),
    lambda g, out, x, axis, start, stop: (place(g, axis, start, x.shape[axis]),),
    lambda x, axis, start, stop: _need(0 <= start <= stop <= x[axis], f"slice {start}:{stop} outside {x}"),
    public=False,
)
register(
    "place",
    _place_fwd,
    lambda g, out, x, axis, start, length: (take(g, axis, start, start + x.shape[axis]),),
    lambda x, axis, start, length: _need(start + x[axis] <= length, f"cannot place {x} at {start} in {length}"),
    public=False,
)


# ------------------------------------------------------------------- matmul

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply("matmul", a, b)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w.T + b`` for ``x`` of shape (N, in) and ``w`` of shape (out, in)."""
    return apply("linear", x, w) if b is None else apply("linear", x, w, b)


def _linear_fwd(x, w, b=None):
    y = x @ w.T
    return y if b is None else y + b


def _linear_shape(x, w, b=None):
    _need(len(x) == 2 and len(w) == 2, f"linear needs 2-D operands, got {x} and {w}")
    _need(x[1] == w[1], f"linear input width {x[1]} != weight width {w[1]}")
    if b is not None:
        _need(tuple(b) == (w[0],), f"bias shape {b} != ({w[0]},)")


def _linear_bwd(g, out, x, w, b=None):
    gx = matmul(g, w) if x.requires_grad else None
    gw = matmul(transpose(g), x) if w.requires_grad else None
    if b is None:
        return gx, gw
    return gx, gw, (sum(g, axis=0) if b.requires_grad else None)


register("linear", _linear_fwd, _linear_bwd, _linear_shape)
register(
    "matmul",
    lambda a, b: a @ b,
    lambda g, out, a, b: (matmul(g, transpose(b)) if a.requires_grad else None,
                          matmul(transpose(a), g) if b.requires_grad else None),
    lambda a, b: _need(len(a) == 2 and len(b) == 2 and a[1] == b[0], f"matmul shapes {a} @ {b}"),
    public=False,
)


# -------------------------------------------------------------- convolution

def _cols(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c = x.shape[:2]
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, ho, wo, k, k
    ho, wo = win.shape[2:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), (n, ho, wo)


def _conv_fwd(x, w, b=None, pad=0):
    o, _, k, _ = w.shape
    cols, (n, ho, wo) = _cols(x, k, pad)
    y = (cols @ w.reshape(o, -1).T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b[None, :, None, None]
    return np.ascontiguousarray(y)


def _conv_shape(x, w, b=None, pad=0):
    _need(len(x) == 4, f"conv2d input must be N x C x H x W, got {x}")
    _need(len(w) == 4 and w[2] == w[3], f"conv2d kernel must be O x C x k x k, got {w}")
    _need(x[1] == w[1], f"conv2d channels {x[1]} != kernel channels {w[1]}")
    _need(0 <= pad <= w[2] - 1, f"padding {pad} outside [0, {w[2] - 1}]")
    _need(x[2] + 2 * pad >= w[2] and x[3] + 2 * pad >= w[2], f"kernel {w[2]} larger than padded input {x}")
    if b is not None:
        _need(tuple(b) == (w[0],), f"bias shape {b} != ({w[0]},)")


def _convT_fwd(g, w, pad=0):
    k = w.shape[2]
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv_fwd(g, wf, pad=k - 1 - pad)


def _wgrad_fwd(x, g, pad=0, k=3):
    cols, _ = _cols(x, k, pad)
    o = g.shape[1]
    gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
    return (gm.T @ cols).reshape(o, x.shape[1], k, k)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, pad: int = 0) -> Tensor:
    """Stride-1 2-D cross-correlation with zero padding on N x C x H x W input."""
    args = (x, w) if b is None else (x, w, b)
    return apply("conv2d", *args, pad=int(pad))


def conv_transpose(g: Tensor, w: Tensor, pad: int) -> Tensor:
    return apply("conv_transpose", g, w, pad=int(pad))


def conv_weight_grad(x: Tensor, g: Tensor, pad: int, k: int) -> Tensor:
    return apply("conv_weight_grad", x, g, pad=int(pad), k=int(k))


def _conv_bwd(g, out, x, w, b=None, pad=0):
    gx = conv_transpose(g, w, pad) if x.requires_grad else None
    gw = conv_weight_grad(x, g, pad, w.shape[2]) if w.requires_grad else None
    if b is None:
        return gx, gw
    return gx, gw, (sum(g, axis=(0, 2, 3)) if b.requires_grad else None)


register("conv2d", _conv_fwd, _conv_bwd, _conv_shape)
register(
    "conv_transpose",
    _convT_fwd,
    lambda g, out, y, w, pad: (conv2d(g, w, pad=pad) if y.requires_grad else None,
                               conv_weight_grad(g, y, pad, w.shape[2]) if w.requires_grad else None),
    lambda y, w, pad: _need(len(y) == 4 and len(w) == 4 and y[1] == w[0] and 0 <= pad <= w[2] - 1,
                            f"conv_transpose shapes {y}, {w}"),
    public=False,
)
register(
    "conv_weight_grad",
    _wgrad_fwd,
    lambda gw, out, x, g, pad, k: (conv_transpose(g, gw, pad) if x.requires_grad else None,
                                   conv2d(x, gw, pad=pad) if g.requires_grad else None),
    lambda x, g, pad, k: _need(len(x) == 4 and len(g) == 4 and x[0] == g[0]
                               and g[2] == x[2] + 2 * pad - k + 1 and g[3] == x[3] + 2 * pad - k + 1,
                               f"conv_weight_grad shapes {x}, {g}"),
    public=False,
)


# ------------------------------------------------------------------ pooling

def mean_pool(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k average pooling over the last two axes."""
    return apply("mean_pool", x, k=int(k))


def unpool(x: Tensor, k: int) -> Tensor:
    """Adjoint of ``mean_pool``: replicate each cell over a k x k block, scaled by 1/k^2."""
    return apply("unpool", x, k=int(k))


def _pool_fwd(x, k):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))


def _unpool_fwd(x, k):
    return np.repeat(np.repeat(x, k, axis=2), k, axis=3) / (k * k)


register(
    "mean_pool",
    _pool_fwd,
    lambda g, out, x, k: (unpool(g, k),),
    lambda x, k: _need(len(x) == 4 and k >= 1 and x[2] % k == 0 and x[3] % k == 0,
                       f"mean_pool window {k} does not tile {x}"),
)
register(
    "unpool",
    _unpool_fwd,
    lambda g, out, x, k: (mean_pool(g, k),),
    lambda x, k: _need(len(x) == 4, f"unpool needs a 4-D operand, got {x}"),
    public=False,
)


# ---------------------------------------------------------------- embedding

def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; ``ids`` holds integer values."""
    return apply("embedding", table, as_tensor(ids))


def embedding_grad(g: Tensor, ids, rows: int) -> Tensor:
    """Adjoint of ``embedding``: scatter-add rows of ``g`` into a ``rows``-row table."""
    return apply("embedding_grad", g, as_tensor(ids), rows=int(rows))


def _ids(ids: np.ndarray) -> np.ndarray:
    return ids.astype(np.int64)


def _emb_grad_fwd(g, ids, rows):
    out = np.zeros((rows, g.shape[-1]))
    np.add.at(out, _ids(ids).reshape(-1), g.reshape(-1, g.shape[-1]))
    return out


def _emb_shape(table, ids):
    _need(len(table) == 2, f"embedding table must be 2-D, got {table}")


register(
    "embedding",
    lambda table, ids: table[_ids(ids)],
    lambda g, out, table, ids: (embedding_grad(g, ids, table.shape[0]), None),
    _emb_shape,
)
register(
    "embedding_grad",
    _emb_grad_fwd,
    lambda gt, out, g, ids, rows: (embedding(gt, ids), None),
    lambda g, ids, rows: _need(tuple(g[:-1]) == tuple(ids), f"embedding_grad shapes {g}, {ids}"),
    public=False,
)


# ------------------------------------------------------------------ remap

def remap(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather ``x.reshape(-1)[index]`` with ``-1`` meaning zero; output has ``index.shape``."""
    return apply("remap", x, index=index)


def remap_adjoint(g: Tensor, index: np.ndarray, shape: tuple) -> Tensor:
    return apply("remap_adjoint", g, index=index, shape=tuple(shape))


def _remap_fwd(x, index):
    flat = np.concatenate([x.reshape(-1), [0.0]])
    return flat[np.where(index < 0, flat.size - 1, index)]


def _remap_adj_fwd(g, index, shape):
    n = int(np.prod(shape))
    out = np.zeros(n + 1)
    np.add.at(out, np.where(index < 0, n, index).reshape(-1), g.reshape(-1))
    return out[:n].reshape(shape)


register(
    "remap",
    _remap_fwd,
    lambda g, out, x, index: (remap_adjoint(g, index, x.shape),),
    lambda x, index: _need(int(index.max(initial=-1)) < int(np.prod(x)), f"remap index exceeds {x}"),
    public=False,
)
register(
    "remap_adjoint",
    _remap_adj_fwd,
    lambda g, out, x, index, shape: (remap(g, index),),
    lambda x, index, shape: _need(tuple(x) == tuple(index.shape), f"remap_adjoint shapes {x}, {index.shape}"),
    public=False,
)


# --------------------------------------------------------- softmax and loss

def softmax(z: Tensor) -> Tensor:
    """Softmax over the last axis."""
    return apply("softmax", z)


def softmax_ce(logits: Tensor, labels) -> Tensor:
    """Per-row cross-entropy ``logsumexp(z) - z[label]`` over the last axis."""
    return apply("softmax_ce", logits, as_tensor(labels))


def _softmax_fwd(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_bwd(g, out, z):
    s = out if out.requires_grad else Tensor(out.data)
    inner = sum(mul(g, s), axis=-1)
    return (mul(s, sub(g, expand(inner, z.shape, -1))),)


def _ce_fwd(z, labels):
    m = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - m).sum(axis=-1)) + m[..., 0]
    picked = np.take_along_axis(z, _ids(labels)[..., None], axis=-1)[..., 0]
    return lse - picked


def _onehot(labels: np.ndarray, v: int) -> np.ndarray:
    return (np.arange(v) == _ids(labels)[..., None]).astype(np.float64)


def _ce_bwd(g, out, z, labels):
    resid = sub(softmax(z), Tensor(_onehot(labels.data, z.shape[-1])))
    return mul(expand(g, z.shape, -1), resid), None


def _ce_shape(z, labels):
    _need(len(z) >= 1 and tuple(z[:-1]) == tuple(labels),
          f"softmax_ce logits {z} do not match labels {labels}")


register("softmax", _softmax_fwd, _softmax_bwd, lambda z: _need(len(z) >= 1, "softmax needs an axis"),
         public=False)
register("softmax_ce", _ce_fwd, _ce_bwd, _ce_shape)

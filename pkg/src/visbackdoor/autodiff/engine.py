"""Tensor type, primitive registry and the reverse-mode gradient driver.

Every primitive declares its backward rule as a composition of registered
primitives, so a backward pass run with ``create_graph=True`` is itself a
differentiable graph (double backprop). No Jacobian or Hessian is ever formed.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for engine errors."""


class ShapeError(AutodiffError, ValueError):
    """Operand shapes do not satisfy a primitive's contract."""


class UnsupportedPrimitiveError(AutodiffError, ValueError):
    """An operation name that is not in the primitive registry."""


class GradientError(AutodiffError, ValueError):
    """A gradient request that cannot be honoured."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def set_grad_enabled(flag: bool):
    prev = _grad_enabled()
    _state.enabled = bool(flag)
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    """Context in which primitives compute values but link no graph."""
    return set_grad_enabled(False)


def _active_record():
    stack = getattr(_state, "records", None)
    return stack[-1] if stack else None


def _push_record(rec) -> None:
    if not hasattr(_state, "records"):
        _state.records = []
    _state.records.append(rec)


def _pop_record() -> None:
    _state.records.pop()


class Node:
    """One primitive application: operation, operands and static attributes."""

    __slots__ = ("op", "inputs", "attrs")

    def __init__(self, op: str, inputs: tuple, attrs: dict):
        self.op = op
        self.inputs = inputs
        self.attrs = attrs


class Tensor:
    """A float64 array with an optional link to the primitive that produced it."""

    __slots__ = ("data", "requires_grad", "node", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node: Optional[Node] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar routes through the registered primitives
    def __add__(self, other):
        return apply("add", self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return apply("add", self, apply("scale", as_tensor(other), c=-1.0))

    def __rsub__(self, other):
        return apply("add", as_tensor(other), apply("scale", self, c=-1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return apply("scale", self, c=float(other))
        return apply("mul", self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return apply("scale", self, c=-1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Primitive:
    """Registry entry. ``forward`` maps arrays to an array; ``backward`` maps
    the output cotangent (a Tensor) to one Tensor or ``None`` per operand."""

    def __init__(self, name: str, forward: Callable, backward: Optional[Callable],
                 shape: Callable, public: bool = True):
        self.name = name
        self.forward = forward
        self.backward = backward
        self.shape = shape
        self.public = public


PRIMITIVES: dict[str, Primitive] = {}


def register(name: str, forward, backward, shape, public: bool = True) -> Primitive:
    prim = Primitive(name, forward, backward, shape, public)
    PRIMITIVES[name] = prim
    return prim


def get_primitive(name: str) -> Primitive:
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise UnsupportedPrimitiveError(f"unsupported primitive {name!r}") from None


def describe(op: str, name: Optional[str], index: Optional[int] = None) -> str:
    where = f"node {index} " if index is not None else "node "
    return where + f"'{op}'" + (f" ({name})" if name else "")


def apply(op: str, *inputs: Tensor, name: Optional[str] = None, **attrs) -> Tensor:
    """Evaluate primitive ``op`` and link the result into the graph."""
    prim = get_primitive(op)
    rec = _active_record()
    try:
        prim.shape(*[t.shape for t in inputs], **attrs)
    except ShapeError as e:
        index = len(rec.nodes) if rec is not None else None
        raise ShapeError(f"{describe(op, name, index)}: {e}") from None
    out = Tensor(prim.forward(*[t.data for t in inputs], **attrs), name=name)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, attrs)
    if rec is not None:
        rec._append(op, inputs, out, attrs)
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.inputs:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def grad(output: Tensor, wrt: Sequence[Tensor], grad_output: Optional[Tensor] = None,
         create_graph: bool = False) -> list[Tensor]:
    """Reverse-mode gradients of ``output`` with respect to each tensor in ``wrt``.

    ``output`` must be a scalar unless ``grad_output`` is given. With
    ``create_graph`` the returned gradients are themselves differentiable.
    Tensors the output does not depend on receive zeros.
    """
    if grad_output is None:
        if output.shape != ():
            raise GradientError(f"gradient needs a scalar output, got shape {output.shape}")
        grad_output = Tensor(1.0)
    for w in wrt:
        if not w.requires_grad:
            raise GradientError(f"gradient requested on non-differentiable tensor {w.name or w!r}")
    if not output.requires_grad:
        return [Tensor(np.zeros(w.shape)) for w in wrt]
    wanted = {id(w) for w in wrt}
    kept: dict[int, Tensor] = {}
    grads: dict[int, Tensor] = {id(output): grad_output}
    with set_grad_enabled(create_graph):
        for t in reversed(_topo_order(output)):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if id(t) in wanted:
                kept[id(t)] = g
            if t.node is None:
                continue
            prim = PRIMITIVES[t.node.op]
            parts = prim.backward(g, t, *t.node.inputs, **t.node.attrs)
            for inp, gi in zip(t.node.inputs, parts):
                if gi is None or not inp.requires_grad:
                    continue
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else apply("add", prev, gi)
    return [kept.get(id(w), Tensor(np.zeros(w.shape))) for w in wrt]

"""Computation records: an ordered, replayable list of primitive applications."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import (
    GradientError, ShapeError, Tensor, _pop_record, _push_record, apply, describe,
    get_primitive, grad, no_grad,
)


@dataclass
class RecordNode:
    op: str
    inputs: tuple[int, ...]
    output: int
    attrs: dict
    name: Optional[str] = None


@dataclass
class Record:
    """Topologically ordered primitive applications over numbered values.

    Values are numbered densely: declared inputs and captured constants first
    appear as slots, then every node's output. Build one either by tracing
    (``with Record() as rec: ...``) or node by node with :meth:`add_node`.
    """

    input_ids: list[int] = field(default_factory=list)
    input_shapes: list[tuple] = field(default_factory=list)
    differentiable: list[bool] = field(default_factory=list)
    constants: dict[int, np.ndarray] = field(default_factory=dict)
    nodes: list[RecordNode] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)
    n_values: int = 0

    def __post_init__(self):
        self._ids: dict[int, int] = {}
        self._keep: list[Tensor] = []

    # tracing -----------------------------------------------------------
    def __enter__(self) -> "Record":
        _push_record(self)
        return self

    def __exit__(self, *exc) -> None:
        _pop_record()

    def input(self, value, name: Optional[str] = None, differentiable: bool = True) -> Tensor:
        t = Tensor(value, requires_grad=differentiable, name=name)
        vid = self._new_value(t)
        self.input_ids.append(vid)
        self.input_shapes.append(t.shape)
        self.differentiable.append(differentiable)
        return t

    def output(self, *tensors: Tensor) -> None:
        for t in tensors:
            self.outputs.append(self._value_id(t))

    def _new_value(self, t: Tensor) -> int:
        vid = self.n_values
        self.n_values += 1
        self._ids[id(t)] = vid
        self._keep.append(t)
        return vid

    def _value_id(self, t: Tensor) -> int:
        vid = self._ids.get(id(t))
        if vid is None:  # a tensor created outside the trace is a constant
            vid = self._new_value(t)
            self.constants[vid] = t.data.copy()
        return vid

    def _append(self, op: str, inputs: Sequence[Tensor], out: Tensor, attrs: dict) -> None:
        ins = tuple(self._value_id(t) for t in inputs)
        self.nodes.append(RecordNode(op, ins, self._new_value(out), dict(attrs), out.name))

    # explicit construction ---------------------------------------------
    def add_input(self, shape: tuple, differentiable: bool = True) -> int:
        vid = self.n_values
        self.n_values += 1
        self.input_ids.append(vid)
        self.input_shapes.append(tuple(shape))
        self.differentiable.append(differentiable)
        return vid

    def add_constant(self, value) -> int:
        vid = self.n_values
        self.n_values += 1
        self.constants[vid] = np.asarray(value, dtype=np.float64)
        return vid

    def add_node(self, op: str, inputs: Sequence[int], name: Optional[str] = None, **attrs) -> int:
        """Append one primitive; unknown operations are rejected here, not at evaluation."""
        get_primitive(op)
        for i in inputs:
            if not 0 <= i < self.n_values:
                raise ValueError(f"node input {i} is not defined before its consumer")
        vid = self.n_values
        self.n_values += 1
        self.nodes.append(RecordNode(op, tuple(inputs), vid, attrs, name))
        return vid


def _replay(record: Record, inputs: Sequence) -> dict[int, Tensor]:
    if len(inputs) != len(record.input_ids):
        raise ShapeError(f"record expects {len(record.input_ids)} inputs, got {len(inputs)}")
    env: dict[int, Tensor] = {}
    for k, (vid, shape, flag, value) in enumerate(
            zip(record.input_ids, record.input_shapes, record.differentiable, inputs)):
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=flag)
        if t.shape != tuple(shape):
            raise ShapeError(f"input {k}: expected shape {tuple(shape)}, got {t.shape}")
        env[vid] = t
    for vid, value in record.constants.items():
        env[vid] = Tensor(value)
    for index, node in enumerate(record.nodes):
        try:
            env[node.output] = apply(node.op, *[env[i] for i in node.inputs], name=node.name, **node.attrs)
        except ShapeError as e:
            msg = str(e).split(": ", 1)[-1]
            raise ShapeError(f"{describe(node.op, node.name, index)}: {msg}") from None
    return env


def evaluate(record: Record, inputs: Sequence) -> list[np.ndarray]:
    """Replay ``record`` on new input values and return its outputs."""
    with no_grad():
        env = _replay(record, inputs)
    return [env[o].data for o in record.outputs]


def gradient(record: Record, inputs: Sequence, output: int = 0,
             wrt: Optional[Sequence[int]] = None) -> list[np.ndarray]:
    """Reverse-mode gradient of the scalar ``record.outputs[output]``.

    ``wrt`` lists positions in the record's input list (default: every
    differentiable input).
    """
    if wrt is None:
        wrt = [k for k, f in enumerate(record.differentiable) if f]
    for k in wrt:
        if not record.differentiable[k]:
            raise GradientError(f"input {k} is not marked differentiable")
    env = _replay(record, inputs)
    out = env[record.outputs[output]]
    targets = [env[record.input_ids[k]] for k in wrt]
    return [g.data for g in grad(out, targets)]

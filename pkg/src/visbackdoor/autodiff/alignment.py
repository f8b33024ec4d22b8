"""Cosine alignment between parameter gradients and its input-space derivative."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .engine import GradientError, Tensor, grad
from .primitives import mul, sum as tsum

STABILIZER = 1e-8
DEGENERATE_NORM = 1e-12


class DegenerateGradientError(GradientError):
    """A gradient whose norm is too small for the cosine to be defined."""


def flatten_gradient(parts: Sequence) -> np.ndarray:
    """Concatenate per-parameter gradients in the given (declaration) order."""
    arrays = [p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64) for p in parts]
    if not arrays:
        return np.zeros(0)
    return np.concatenate([a.reshape(-1) for a in arrays])


def _norms(g1: np.ndarray, g2: np.ndarray) -> tuple[float, float]:
    if g1.shape != g2.shape:
        raise ValueError(f"gradient length mismatch: {g1.size} vs {g2.size}")
    n1, n2 = float(np.linalg.norm(g1)), float(np.linalg.norm(g2))
    if n1 < DEGENERATE_NORM or n2 < DEGENERATE_NORM:
        raise DegenerateGradientError("degenerate gradient: norm below 1e-12, cosine undefined")
    return n1, n2


def cosine_alignment(g1, g2, sigma: float = STABILIZER) -> float:
    """``1 - <g1, g2> / (|g1| |g2| + sigma)``, a value in [0, 2]."""
    g1 = np.asarray(g1, dtype=np.float64).reshape(-1)
    g2 = np.asarray(g2, dtype=np.float64).reshape(-1)
    n1, n2 = _norms(g1, g2)
    return 1.0 - float(g1 @ g2) / (n1 * n2 + sigma)


def cosine_alignment_and_adjoint(target: np.ndarray, g: np.ndarray,
                                 sigma: float = STABILIZER) -> tuple[float, np.ndarray]:
    """Alignment loss and its derivative with respect to ``g`` (``target`` constant)."""
    nt, ng = _norms(target, g)
    den = nt * ng + sigma
    dot = float(target @ g)
    adj = -(target / den - dot * nt * g / (ng * den * den))
    return 1.0 - dot / den, adj


def input_gradient_of_gradient_functional(
        loss_fn: Callable[[], Tensor], params: Sequence[Tensor], target_grad: np.ndarray,
        inputs: Sequence[Tensor], sigma: float = STABILIZER) -> tuple[float, list[np.ndarray]]:
    """Derivative of ``1 - cos(target_grad, grad_params loss_fn())`` with respect to ``inputs``.

    The parameter gradient is built with a recorded (differentiable) backward
    pass; the cosine head is differentiated in closed form and its adjoint is
    pulled back through that recorded pass. Returns ``(loss, grads)``.
    """
    loss = loss_fn()
    pgrads = grad(loss, params, create_graph=True)
    value, adj = cosine_alignment_and_adjoint(
        np.asarray(target_grad, dtype=np.float64).reshape(-1), flatten_gradient(pgrads), sigma)
    return value, pullback(pgrads, adj, inputs)


def pullback(pgrads: Sequence[Tensor], cotangent: np.ndarray, inputs: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient of ``<cotangent, flatten(pgrads)>`` with respect to ``inputs``."""
    total = None
    offset = 0
    for g in pgrads:
        n = g.size
        piece = tsum(mul(g, Tensor(cotangent[offset:offset + n].reshape(g.shape))))
        offset += n
        if not piece.requires_grad:
            continue
        total = piece if total is None else total + piece
    if total is None:
        return [np.zeros(t.shape) for t in inputs]
    return [g.data for g in grad(total, inputs)]

"""Reverse-mode differentiation on numpy arrays with double backprop."""

from .alignment import (
    DEGENERATE_NORM, STABILIZER, DegenerateGradientError, cosine_alignment,
    cosine_alignment_and_adjoint, flatten_gradient, input_gradient_of_gradient_functional, pullback,
)
from .engine import (
    PRIMITIVES, AutodiffError, GradientError, ShapeError, Tensor, UnsupportedPrimitiveError, as_tensor,
    grad, no_grad, set_grad_enabled,
)
from .primitives import (
    PUBLIC, add, concat, conv2d, embedding, flatten, linear, matmul, mean_pool, mul, permute, relu,
    remap, reshape, scale, softmax, softmax_ce, sub, sum, take,
)
from .record import Record, evaluate, gradient

__all__ = [
    "PRIMITIVES", "PUBLIC", "AutodiffError", "DEGENERATE_NORM", "DegenerateGradientError",
    "GradientError", "Record", "STABILIZER", "ShapeError", "Tensor", "UnsupportedPrimitiveError",
    "add", "as_tensor", "concat", "conv2d", "cosine_alignment", "cosine_alignment_and_adjoint",
    "embedding", "evaluate", "flatten", "flatten_gradient", "grad", "gradient",
    "input_gradient_of_gradient_functional", "linear", "matmul", "mean_pool", "mul", "no_grad",
    "permute", "pullback", "relu", "remap", "reshape", "scale", "set_grad_enabled", "softmax",
    "softmax_ce", "sub", "sum", "take",
]

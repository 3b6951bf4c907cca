"""Small float64 autodiff engine and transformer layers."""

from . import checkpoint, nn, optim
from .tensor import (
    Tensor, absolute, add, as_tensor, bce_with_logits, clip_min, concat, cos, div, exp,
    gelu, getitem, is_grad_enabled, l1, l2, layer_norm, log, matmul, mean, mul, neg,
    no_grad, power, relu, reshape, sigmoid, sin, softmax, sqrt, square, stack, sub,
    swap_last, tanh, tensor, transpose, tsum,
)

__all__ = [
    "Tensor", "absolute", "add", "as_tensor", "bce_with_logits", "checkpoint", "clip_min",
    "concat", "cos", "div", "exp", "gelu", "getitem", "is_grad_enabled", "l1", "l2",
    "layer_norm", "log", "matmul", "mean", "mul", "neg", "nn", "no_grad", "optim", "power",
    "relu", "reshape", "sigmoid", "sin", "softmax", "sqrt", "square", "stack", "sub",
    "swap_last", "tanh", "tensor", "transpose", "tsum",
]

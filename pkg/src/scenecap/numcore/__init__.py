"""Tensor arithmetic, reverse-mode differentiation and ADAM."""
from .check import NonDeterministicError, finite_diff_check
from .optim import AdamState, adam_step
from .tensor import (
    Tape, Tensor, active_tape, add, as_tensor, concat, exp, getitem, gradients,
    log, log_softmax_array, matmul, mul, neg, parameter, reshape, sigmoid,
    softmax, softmax_array, softmax_cross_entropy, sub, take_rows, tanh,
    transpose,
)
from .tensor import sum as reduce_sum

__all__ = [
    "AdamState", "NonDeterministicError", "Tape", "Tensor", "active_tape",
    "adam_step", "add", "as_tensor", "concat", "exp", "finite_diff_check",
    "getitem", "gradients", "log", "log_softmax_array", "matmul", "mul", "neg",
    "parameter", "reduce_sum", "reshape", "sigmoid", "softmax", "softmax_array",
    "softmax_cross_entropy", "sub", "take_rows", "tanh", "transpose",
]

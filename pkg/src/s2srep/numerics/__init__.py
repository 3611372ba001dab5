from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import max_relative_error, numeric_gradient
from .optim import Adam
from .tensor import (
    NonFiniteError, ShapeError, Tape, Tensor, add, additive_attention, concat, forward_op, index,
    logistic_loss, lstm_cell, lstm_gates, lstm_sequence, matmul, mse, mul, relu, reshape,
    sigmoid, slice_, softmax, stack, sub, sum_, tanh, weighted_sse,
)

__all__ = [
    "Adam", "NonFiniteError", "ShapeError", "Tape", "Tensor", "add",
    "additive_attention", "concat", "forward_op", "index", "load_checkpoint",
    "logistic_loss", "lstm_cell", "lstm_gates", "lstm_sequence", "matmul",
    "max_relative_error", "mse", "mul", "numeric_gradient", "relu", "reshape",
    "save_checkpoint", "sigmoid", "slice_", "softmax", "stack", "sub", "sum_", "tanh",
    "weighted_sse",
]

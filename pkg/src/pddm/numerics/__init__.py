"""Dense float64 arrays, reverse-mode differentiation and the operators the model needs."""

from . import ops
from .gradcheck import GradCheckReport, check_values, grad_check, relative_error
from .ops import (
    absolute, add, broadcast_to, concat, conv1d, conv2d, conv_transpose2d, div, exp,
    index, layer_norm, leaky_relu, linear, log, matmul, mean, mul, power, relu, reshape,
    scale, softmax, softmax_lastaxis, sqrt, square, standardize, sub, take, transpose,
)
from .ops import sum as sum_  # noqa: F401
from .optim import Adam
from .params import ParamStore, glorot_bound
from .value import NdValue, as_value, backward, grad_enabled, no_grad

__all__ = [
    "NdValue", "ParamStore", "Adam", "GradCheckReport", "backward", "no_grad", "as_value",
    "grad_check", "check_values", "relative_error", "glorot_bound", "grad_enabled", "ops",
]

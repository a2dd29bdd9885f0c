"""Deterministic differentiable-computation core.

Dense float64 matrices with reverse-mode gradients, the layer operations the
models in this package are built from, an adaptive-moment optimizer, a
finite-difference gradient checker, and a binary checkpoint format.
"""

from ibvq.numcore.checkpoint import load_params, save_params
from ibvq.numcore.gradcheck import grad_check
from ibvq.numcore.optim import (
    ParamStore,
    TrainConfig,
    adam_step,
    glorot_uniform,
)
from ibvq.numcore.tensor import (
    Array,
    Tensor,
    add,
    affine,
    attention,
    concat_cols,
    constant,
    conv1d,
    cross_entropy,
    exp,
    gather_rows,
    layer_norm,
    matmul,
    mean_all,
    mse,
    mul,
    relu,
    repeat_rows,
    segment_mean,
    sinusoid_table,
    softmax_rows,
    sqnorm,
    straight_through,
    sub,
    sum_all,
    tensor,
    transpose,
    unfold_rows,
)

__all__ = [
    "Array",
    "ParamStore",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "add",
    "affine",
    "attention",
    "concat_cols",
    "constant",
    "conv1d",
    "cross_entropy",
    "exp",
    "gather_rows",
    "glorot_uniform",
    "grad_check",
    "layer_norm",
    "load_params",
    "matmul",
    "mean_all",
    "mse",
    "mul",
    "relu",
    "repeat_rows",
    "save_params",
    "segment_mean",
    "sinusoid_table",
    "softmax_rows",
    "sqnorm",
    "straight_through",
    "sub",
    "sum_all",
    "tensor",
    "transpose",
    "unfold_rows",
]

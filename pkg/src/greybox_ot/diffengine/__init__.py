from .engine import (
    Node,
    PRIMITIVE_TAGS,
    backward,
    broadcast_to,
    concat,
    constant,
    conv1d,
    input_gradient,
    matmul,
    primitive,
    scale,
    variable,
)
from .engine import (
    add, sub, mul, div, tanh, relu, sin, exp, square, sqrt,
    reduce_sum, reduce_mean, l2norm, reshape, slice_node,
)
from .optim import ParamStore, adam_step
from .checkpoint import save_arrays, load_arrays

__all__ = [
    "Node", "PRIMITIVE_TAGS", "backward", "broadcast_to", "concat",
    "constant", "conv1d", "input_gradient", "matmul", "primitive", "scale",
    "variable", "add", "sub", "mul", "div", "tanh", "relu", "sin", "exp",
    "square", "sqrt", "reduce_sum", "reduce_mean", "l2norm", "reshape",
    "slice_node", "ParamStore", "adam_step", "save_arrays", "load_arrays",
]

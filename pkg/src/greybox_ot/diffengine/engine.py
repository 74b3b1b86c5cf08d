"""Reverse-mode automatic differentiation on dense float64 tensors.

Values are immutable numpy arrays attached to graph ``Node`` objects.  Every
backward rule is itself expressed through the public primitives, so the
gradient of a scalar is again a graph node and can be differentiated once
more (needed for the critic gradient penalty).  No taped double-backprop.

Conventions:
  * everything is float64; inputs are coerced on node creation,
  * arrays on nodes are frozen (``writeable=False``) -- primitives never
    mutate their inputs,
  * a non-finite scalar value is an error state and raises immediately;
    full-tensor checks are enabled with ``GREYBOX_OT_CHECKS=1``.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "Node",
    "constant",
    "variable",
    "primitive",
    "matmul",
    "concat",
    "broadcast_to",
    "scale",
    "conv1d",
    "backward",
    "input_gradient",
    "PRIMITIVE_TAGS",
]

# Tags accepted by primitive().  div / exp / reshape exist as internal ops so
# the backward rules of sqrt, l2norm and the kernels close under
# differentiation, but they are not part of the public tag set.
PRIMITIVE_TAGS = frozenset(
    {
        "add", "sub", "mul", "scale", "matmul", "conv1d", "tanh", "relu",
        "sin", "sum", "mean", "square", "sqrt", "l2norm", "concat", "slice",
        "broadcast",
    }
)

_FULL_CHECKS = os.environ.get("GREYBOX_OT_CHECKS", "0") not in ("0", "", "false")


class Node:
    """One vertex of the computation graph: a frozen float64 array plus the
    primitive tag and parents needed to replay its backward rule."""

    __slots__ = ("value", "op", "parents", "aux", "grad", "requires_grad")

    def __init__(self, value, op="leaf", parents=(), aux=None, requires_grad=False):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            if not np.isfinite(v):
                raise FloatingPointError(f"non-finite scalar produced by '{op}'")
        elif _FULL_CHECKS and not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite values produced by '{op}'")
        if v.flags.writeable:
            v.setflags(write=False)
        self.value = v
        self.op = op
        self.parents = parents
        self.aux = aux
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __getitem__(self, key):
        return slice_node(self, key)

    # -- method sugar ----------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def l2norm(self, axis=None, keepdims=False):
        return l2norm(self, axis, keepdims)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sin(self):
        return sin(self)

    def exp(self):
        return exp(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def constant(value):
    """Wrap an array as a non-differentiable leaf (data, hyperparameters)."""
    return Node(np.array(value, dtype=np.float64), op="leaf")


def variable(value):
    """Wrap an array as a differentiable leaf (parameters, probe inputs)."""
    return Node(np.array(value, dtype=np.float64), op="leaf", requires_grad=True)


def _lift(x):
    return x if isinstance(x, Node) else constant(x)


def _req(*nodes):
    return any(n.requires_grad for n in nodes)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b):
    return Node(a.value + b.value, "add", (a, b), requires_grad=_req(a, b))


def sub(a, b):
    return Node(a.value - b.value, "sub", (a, b), requires_grad=_req(a, b))


def mul(a, b):
    return Node(a.value * b.value, "mul", (a, b), requires_grad=_req(a, b))


def div(a, b):
    return Node(a.value / b.value, "div", (a, b), requires_grad=_req(a, b))


def scale(a, c):
    """Multiply by a python scalar constant."""
    return Node(a.value * float(c), "scale", (a,), aux=float(c), requires_grad=a.requires_grad)


def matmul(a, b, ta=False, tb=False):
    """2-D matrix product with optional transposes (kept as flags so the
    backward rule stays inside the primitive set)."""
    av = a.value.T if ta else a.value
    bv = b.value.T if tb else b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    return Node(av @ bv, "matmul", (a, b), aux=(ta, tb), requires_grad=_req(a, b))


def tanh(a):
    return Node(np.tanh(a.value), "tanh", (a,), requires_grad=a.requires_grad)


def relu(a):
    return Node(np.maximum(a.value, 0.0), "relu", (a,), requires_grad=a.requires_grad)


def sin(a):
    return Node(np.sin(a.value), "sin", (a,), requires_grad=a.requires_grad)


def exp(a):
    return Node(np.exp(a.value), "exp", (a,), requires_grad=a.requires_grad)


def square(a):
    return Node(a.value * a.value, "square", (a,), requires_grad=a.requires_grad)


def sqrt(a):
    return Node(np.sqrt(a.value), "sqrt", (a,), requires_grad=a.requires_grad)


def reduce_sum(a, axis=None, keepdims=False):
    return Node(np.sum(a.value, axis=axis, keepdims=keepdims), "sum", (a,),
                aux=(axis, keepdims), requires_grad=a.requires_grad)


def reduce_mean(a, axis=None, keepdims=False):
    return Node(np.mean(a.value, axis=axis, keepdims=keepdims), "mean", (a,),
                aux=(axis, keepdims), requires_grad=a.requires_grad)


def l2norm(a, axis=None, keepdims=False):
    v = np.sqrt(np.sum(a.value * a.value, axis=axis, keepdims=keepdims))
    return Node(v, "l2norm", (a,), aux=(axis, keepdims), requires_grad=a.requires_grad)


def concat(nodes, axis=0):
    nodes = tuple(nodes)
    v = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = tuple(n.value.shape[axis] for n in nodes)
    return Node(v, "concat", nodes, aux=(axis, sizes), requires_grad=_req(*nodes))


def slice_node(a, key):
    """Basic slicing restricted to per-axis contiguous ranges (no steps)."""
    if not isinstance(key, tuple):
        key = (key,)
    norm = []
    for dim, k in zip(a.value.shape, key):
        if isinstance(k, (int, np.integer)):
            # ints keep the axis (length-1 slice), unlike numpy indexing
            k = slice(k % dim, k % dim + 1)
        if k.step not in (None, 1):
            raise ValueError("slice primitive supports step 1 only")
        start, stop, _ = k.indices(dim)
        norm.append((start, stop))
    key_full = tuple(slice(s, e) for s, e in norm)
    return Node(a.value[key_full], "slice", (a,), aux=(tuple(norm), a.value.shape),
                requires_grad=a.requires_grad)


def broadcast_to(a, shape):
    return Node(np.broadcast_to(a.value, shape), "broadcast", (a,),
                aux=a.value.shape, requires_grad=a.requires_grad)


def reshape(a, shape):
    return Node(np.reshape(a.value, shape), "reshape", (a,), aux=a.value.shape,
                requires_grad=a.requires_grad)


def conv1d(x, w, bias=None, padding="same"):
    """1-D convolution via explicit im2col + matmul.

    x: [B, L, C] node; w: [K*C, F] node with taps ordered k-major;
    padding 'same' zero-pads to keep L, 'valid' shrinks it.
    Returns [B, L_out, F].
    """
    B, L, C = x.value.shape
    KC, F = w.value.shape
    if KC % C != 0:
        raise ValueError(f"conv1d weight rows {KC} not a multiple of channels {C}")
    K = KC // C
    if padding == "same":
        lo = (K - 1) // 2
        hi = K - 1 - lo
        parts = []
        if lo:
            parts.append(constant(np.zeros((B, lo, C))))
        parts.append(x)
        if hi:
            parts.append(constant(np.zeros((B, hi, C))))
        xp = concat(parts, axis=1) if len(parts) > 1 else x
        L_out = L
    elif padding == "valid":
        xp = x
        L_out = L - K + 1
    else:
        raise ValueError(f"unknown padding {padding!r}")
    cols = concat([xp[:, k:k + L_out, :] for k in range(K)], axis=2)
    out = matmul(reshape(cols, (B * L_out, K * C)), w)
    if bias is not None:
        out = add(out, bias)
    return reshape(out, (B, L_out, F))


_CANONICAL = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "matmul": matmul,
    "conv1d": conv1d,
    "tanh": tanh,
    "relu": relu,
    "sin": sin,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "square": square,
    "sqrt": sqrt,
    "l2norm": l2norm,
    "concat": concat,
    "slice": slice_node,
    "broadcast": broadcast_to,
}


def primitive(tag, *inputs, **aux):
    """Apply a primitive by tag.  Raises ValueError on unknown tags."""
    if tag not in PRIMITIVE_TAGS:
        raise ValueError(f"unknown primitive tag {tag!r}")
    return _CANONICAL[tag](*inputs, **aux)


# ---------------------------------------------------------------------------
# backward rules -- each emits primitive nodes, so grads are differentiable
# ---------------------------------------------------------------------------

def _reduce_to_shape(g, shape):
    """Undo numpy broadcasting: sum g down to the given shape."""
    if g.value.shape == shape:
        return g
    extra = g.value.ndim - len(shape)
    axes = list(range(extra))
    for i, dim in enumerate(shape):
        if dim == 1 and g.value.shape[extra + i] != 1:
            axes.append(extra + i)
    if axes:
        g = reduce_sum(g, axis=tuple(axes), keepdims=False)
    if g.value.shape != shape:
        g = reshape(g, shape)
    return g


def _restore_reduced(g, node):
    """Reshape a sum/mean/l2norm gradient back to keepdims form, then
    broadcast to the input shape."""
    (axis, keepdims) = node.aux
    x = node.parents[0]
    if axis is None:
        target = (1,) * x.value.ndim
        g = reshape(g, target)
    elif not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % x.value.ndim for a in axes)
        target = tuple(1 if i in axes else d for i, d in enumerate(x.value.shape))
        g = reshape(g, target)
    return broadcast_to(g, x.value.shape)


def _bw_add(node, g):
    a, b = node.parents
    return ((a, _reduce_to_shape(g, a.value.shape)),
            (b, _reduce_to_shape(g, b.value.shape)))


def _bw_sub(node, g):
    a, b = node.parents
    return ((a, _reduce_to_shape(g, a.value.shape)),
            (b, _reduce_to_shape(scale(g, -1.0), b.value.shape)))


def _bw_mul(node, g):
    a, b = node.parents
    return ((a, _reduce_to_shape(mul(g, b), a.value.shape)),
            (b, _reduce_to_shape(mul(g, a), b.value.shape)))


def _bw_div(node, g):
    a, b = node.parents
    ga = _reduce_to_shape(div(g, b), a.value.shape)
    gb = _reduce_to_shape(scale(div(mul(g, a), mul(b, b)), -1.0), b.value.shape)
    return ((a, ga), (b, gb))


def _bw_scale(node, g):
    return ((node.parents[0], scale(g, node.aux)),)


def _bw_matmul(node, g):
    a, b = node.parents
    ta, tb = node.aux
    if ta:
        ga = matmul(b, g, ta=tb, tb=True)
    else:
        ga = matmul(g, b, ta=False, tb=not tb)
    if tb:
        gb = matmul(g, a, ta=True, tb=ta)
    else:
        gb = matmul(a, g, ta=not ta, tb=False)
    return ((a, ga), (b, gb))


def _bw_tanh(node, g):
    one_minus = sub(constant(1.0), square(node))
    return ((node.parents[0], mul(g, one_minus)),)


def _bw_relu(node, g):
    mask = constant((node.parents[0].value > 0.0).astype(np.float64))
    return ((node.parents[0], mul(g, mask)),)


def _bw_sin(node, g):
    x = node.parents[0]
    cos_x = sin(sub(constant(math.pi / 2.0), x))
    return ((x, mul(g, cos_x)),)


def _bw_exp(node, g):
    return ((node.parents[0], mul(g, node)),)


def _bw_square(node, g):
    x = node.parents[0]
    return ((x, mul(g, scale(x, 2.0))),)


def _bw_sqrt(node, g):
    return ((node.parents[0], div(g, scale(node, 2.0))),)


def _bw_sum(node, g):
    return ((node.parents[0], _restore_reduced(g, node)),)


def _bw_mean(node, g):
    x = node.parents[0]
    count = x.value.size / max(node.value.size, 1)
    return ((x, scale(_restore_reduced(g, node), 1.0 / count)),)


def _bw_l2norm(node, g):
    # Subgradient 0 at the kink: where the norm is 0 the numerator x is 0
    # too, so bumping the denominator to 1 there gives an exact 0.
    x = node.parents[0]
    g_b = _restore_reduced(g, node)
    kd = _keepdims_shape(node)
    y_keep = node if node.value.shape == kd else reshape(node, kd)
    y_full = broadcast_to(y_keep, x.value.shape) if y_keep.value.shape != x.value.shape else y_keep
    safe = add(y_full, constant((y_full.value == 0.0).astype(np.float64)))
    return ((x, mul(g_b, div(x, safe))),)


def _keepdims_shape(node):
    (axis, keepdims) = node.aux
    x = node.parents[0]
    if axis is None:
        return (1,) * x.value.ndim
    if keepdims:
        return node.value.shape
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % x.value.ndim for a in axes)
    return tuple(1 if i in axes else d for i, d in enumerate(x.value.shape))


def _bw_concat(node, g):
    axis, sizes = node.aux
    out = []
    key = [slice(None)] * g.value.ndim
    start = 0
    for n, size in zip(node.parents, sizes):
        key[axis] = slice(start, start + size)
        out.append((n, slice_node(g, tuple(key))))
        start += size
    return tuple(out)


def _bw_slice(node, g):
    ranges, in_shape = node.aux
    x = node.parents[0]
    padded = g
    # pad axis by axis with zero constants
    for ax, (start, stop) in enumerate(ranges):
        dim = in_shape[ax]
        if start == 0 and stop == dim:
            continue
        parts = []
        shp = list(padded.value.shape)
        if start > 0:
            shp[ax] = start
            parts.append(constant(np.zeros(shp)))
        parts.append(padded)
        if stop < dim:
            shp = list(padded.value.shape)
            shp[ax] = dim - stop
            parts.append(constant(np.zeros(shp)))
        padded = concat(parts, axis=ax) if len(parts) > 1 else padded
    return ((x, padded),)


def _bw_broadcast(node, g):
    in_shape = node.aux
    return ((node.parents[0], _reduce_to_shape(g, in_shape)),)


def _bw_reshape(node, g):
    return ((node.parents[0], reshape(g, node.aux)),)


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "div": _bw_div,
    "scale": _bw_scale,
    "matmul": _bw_matmul,
    "tanh": _bw_tanh,
    "relu": _bw_relu,
    "sin": _bw_sin,
    "exp": _bw_exp,
    "square": _bw_square,
    "sqrt": _bw_sqrt,
    "sum": _bw_sum,
    "mean": _bw_mean,
    "l2norm": _bw_l2norm,
    "concat": _bw_concat,
    "slice": _bw_slice,
    "broadcast": _bw_broadcast,
    "reshape": _bw_reshape,
}

EXTRA_BACKWARD = _BACKWARD  # extension point for fused ops (see accel)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _toposort(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(root, set_grads=True, release=False):
    """Reverse sweep from a scalar node.

    Returns {id(leaf): grad Node} for every reachable differentiable leaf.
    When set_grads is true, also accumulates the numeric gradient into
    ``node.grad`` on leaves (reset with ``node.grad = None``).

    release=True drops each processed node's structure (parents, aux) as
    the sweep passes it, freeing rollout-sized graphs early; the graph can
    then not be walked again, so never combine it with a later second-order
    pass.
    """
    if root.value.shape != ():
        raise ValueError("backward requires a scalar node")
    if not root.requires_grad:
        return {}
    order = _toposort(root)
    grads = {id(root): constant(1.0)}
    result = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op == "leaf":
            result[id(node)] = g
            if set_grads:
                gv = g.value
                node.grad = gv.copy() if node.grad is None else node.grad + gv
            continue
        rule = _BACKWARD[node.op]
        for parent, pg in rule(node, g):
            if not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else add(prev, pg)
        if release:
            node.parents = ()
            node.aux = None
    return result


def input_gradient(f, y):
    """Gradient of the scalar ``f(y)`` w.r.t. ``y`` as a graph node.

    ``y`` must be a differentiable leaf; the returned node stays connected
    to every parameter inside ``f``, so a further backward() through it
    yields second-order gradients.
    """
    if not y.requires_grad:
        raise ValueError("input_gradient needs a differentiable input node")
    out = f(y)
    if out.value.shape != ():
        raise ValueError("input_gradient requires a scalar-valued function")
    grads = backward(out, set_grads=False)
    g = grads.get(id(y))
    if g is None:
        g = constant(np.zeros_like(y.value))
    return g

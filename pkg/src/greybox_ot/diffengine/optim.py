"""Named parameter storage and the Adam update."""

from __future__ import annotations

import numpy as np

from .engine import Node, variable


class ParamStore:
    """Ordered mapping name -> differentiable leaf node, plus Adam moments.

    Moment arrays always mirror parameter shapes; ``step`` counts completed
    Adam updates.
    """

    def __init__(self):
        self.params: dict[str, Node] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def create(self, name, value) -> Node:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already exists")
        node = variable(value)
        self.params[name] = node
        self.m[name] = np.zeros_like(node.value)
        self.v[name] = np.zeros_like(node.value)
        return node

    def __getitem__(self, name) -> Node:
        return self.params[name]

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for node in self.params.values():
            node.grad = None

    def grads(self):
        out = {}
        for name, node in self.params.items():
            if node.grad is None:
                raise ValueError(f"missing gradient for parameter {name!r}")
            out[name] = node.grad
        return out

    def values(self):
        return {name: np.asarray(node.value) for name, node in self.params.items()}

    def load_values(self, arrays, strict=True):
        for name, node in self.params.items():
            if name not in arrays:
                if strict:
                    raise ValueError(f"checkpoint missing parameter {name!r}")
                continue
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != node.value.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {arr.shape} vs {node.value.shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            node.value = arr

    def n_params(self):
        return sum(n.value.size for n in self.params.values())


def adam_step(store: ParamStore, grads=None, lr=1e-4, beta1=0.9, beta2=0.999,
              eps=1e-8):
    """Standard Adam with bias correction; mutates the store in place."""
    if grads is None:
        grads = store.grads()
    for name in store.params:
        if name not in grads:
            raise ValueError(f"missing gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, node in store.params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != node.value.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        new = node.value - lr * update
        new.setflags(write=False)
        node.value = new
    return store

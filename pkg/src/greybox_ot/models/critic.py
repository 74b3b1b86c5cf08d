"""Potential / critic network: flattened trajectory -> scalar score."""

from __future__ import annotations

import numpy as np

from .. import diffengine as de
from ..diffengine import ParamStore
from .encoder import xavier


class CriticMLP:
    """tanh MLP, linear scalar head; smooth enough for the second-order
    gradient-penalty term."""

    def __init__(self, in_dim, rng, hidden=(250, 100, 100, 50)):
        self.in_dim = in_dim
        self.hidden = tuple(hidden)
        self.store = ParamStore()
        dims = [in_dim, *hidden, 1]
        self.layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            w = xavier(rng, a, b)
            if i == len(dims) - 2:
                # start with slope well above 1 so the gradient penalty has
                # something to optimize from step one (linear head: no
                # saturation risk)
                w = 4.0 * w
            W = self.store.create(f"psi.W{i}", w)
            bb = self.store.create(f"psi.b{i}", np.zeros(b))
            self.layers.append((W, bb))

    def forward(self, y) -> de.Node:
        """y: node or array [B, in_dim] -> scores node [B, 1]."""
        h = y if isinstance(y, de.Node) else de.constant(np.atleast_2d(y))
        for i, (W, b) in enumerate(self.layers):
            h = de.add(de.matmul(h, W), b)
            if i < len(self.layers) - 1:
                h = de.tanh(h)
        return h

    def score_mean(self, y) -> de.Node:
        return de.reduce_mean(self.forward(y))

    def score_sum(self, y) -> de.Node:
        return de.reduce_sum(self.forward(y))

    def arch(self) -> dict:
        return {"kind": "mlp", "in_dim": self.in_dim, "hidden": list(self.hidden)}
